//! Coarse (analytical) and fine (cycle-level) predictors.

pub mod coarse;
pub mod cost_model;
pub mod fine;
pub mod report;

pub use coarse::{ip_estimate, predict_coarse, resource_usage, IpEstimate, PredictionReport, ResourceReport, RoundPath};
pub use fine::{bottleneck, export_trace, simulate, IpActivity, SimLimits, SimResult, TraceEvent};
