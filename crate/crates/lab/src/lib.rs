//! Configuration, orchestration and reporting for recovery experiments.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{LabError, LabResult};
pub use experiment::run;
pub use report::ExperimentResult;
