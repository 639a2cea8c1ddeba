//! Template pool, design-space exploration and graph rewrites.

pub mod explore;
pub mod pipeline;
pub mod space;
pub mod stage2;
pub mod templates;

pub use explore::{explore, write_outputs, ExploreConfig, ExploreOutcome, Manifest, ReportFormat};
pub use pipeline::{insert_pipeline, insert_pipeline_between, pipeline_successor, reallocate_resource, RewriteNote};
pub use space::{
    enumerate_stage1, prune_evaluated, prune_stage1, AppSpec, DesignPoint, DesignSpace, Objective, ResourceBudget,
    Stage1Entry, TemplateSpace,
};
pub use stage2::{optimize_candidate, optimize_stage2, Candidate, ConvergenceRule};
pub use templates::{instantiate_template, TemplateKind, TemplateParams};
