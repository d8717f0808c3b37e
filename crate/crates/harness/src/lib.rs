//! Twin experiments for the `lsmcmc` filters: configuration, synthetic truth
//! and observations, RMSE metrics and the CSV/JSONL/manifest outputs consumed
//! by the plotting scripts.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod swath;
pub mod twin;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, run_path, validate_path, ExperimentResult, FilterRun, RunOptions};
pub use metrics::{rmse, rmse_at, MetricRow, Reference};
pub use swath::{generate_swath, SwathPattern};
pub use twin::{generate_twin, TwinData};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Invalid or unreadable configuration; reported before any output is written.
    #[error("config error: {0}")]
    Config(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("config parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] lsmcmc::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    /// 2 for configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Field { .. } | HarnessError::Parse { .. } => 2,
            HarnessError::Core(lsmcmc::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
