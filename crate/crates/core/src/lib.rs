pub mod builder;
pub mod cli;
pub mod cost;
pub mod dnn;
pub mod error;
pub mod graph;
pub mod predict;

pub use error::{Error, Result};
