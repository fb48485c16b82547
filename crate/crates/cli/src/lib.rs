//! Library surface of the pipeline CLI, exposed so integration tests can
//! drive runs directly.

pub mod artifacts;
pub mod classify;
pub mod config;
pub mod pipeline;
pub mod stages;

pub use classify::{classify_new, read_alerts, AlertRecord, ClassifyOutcome};
pub use config::{Featurization, PipelineConfig};
pub use pipeline::{Pipeline, STAGE_ORDER};
pub use stages::{StageState, StageStatus};
