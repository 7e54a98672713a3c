//! Experiment driver: baseline training, annotator benchmarking and the
//! active-learning loop, plus the run store, reports and the HTTP service
//! that human annotators and the console talk to.

mod active;
mod baseline;
mod config;
mod data;
mod record;
mod report;
pub mod service;

pub use active::{cycle_seed, find_matching_cycle, init_al, run_active_learning, run_cycle, LabeledItem, PoolState, StoppingRule};
pub use baseline::{run_baseline, train_baseline};
pub use config::{DatasetEntry, ExperimentConfig};
pub use data::{prepare, PoolItem, PreparedData};
pub use record::{
    CycleRecord, DatasetRef, LabelEntry, Progress, RunConfig, RunKind, RunRecord, RunStatus, RunStore,
    SCHEMA_VERSION,
};
pub use report::{report, ComparisonReport, Series, SeriesPoint};

use crate::annotators::AnnotatorError;
use crate::models::ModelError;
use crate::textprep::TextprepError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Dataset(#[from] TextprepError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("annotation failed for `{sample_id}`: {error}")]
    Annotation { sample_id: String, error: AnnotatorError },
    #[error("dataset too small: need {needed} training samples, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },
    #[error("sample `{0}` has no gold label")]
    MissingGold(String),
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run store: {0}")]
    Store(String),
    #[error("config: {0}")]
    Config(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl OrchestratorError {
    /// Stable machine-readable tag for JSON error lines.
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::Dataset(_) => "dataset",
            OrchestratorError::Model(_) => "model",
            OrchestratorError::Uncertainty(_) => "uncertainty",
            OrchestratorError::Annotation { .. } => "annotation",
            OrchestratorError::DatasetTooSmall { .. } => "dataset_too_small",
            OrchestratorError::MissingGold(_) => "missing_gold",
            OrchestratorError::UnknownRun(_) => "unknown_run",
            OrchestratorError::Store(_) => "store",
            OrchestratorError::Config(_) => "config",
            OrchestratorError::Integrity(_) => "integrity",
            OrchestratorError::InvalidArgument(_) => "invalid_argument",
        }
    }
}
