use std::path::PathBuf;

use thiserror::Error;

use crate::forecast::TrainedNet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration or usage (bad field value, missing column, ...).
    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: u64,
        column: String,
        message: String,
    },

    /// A caller broke an API contract, e.g. passed a trace from another network.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training diverged. Carries the last parameters that produced finite losses.
    #[error("training failed at epoch {epoch}: {message}")]
    Training {
        epoch: usize,
        message: String,
        last_good: Option<Box<TrainedNet>>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration or input files.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Json(_) | Error::Csv(_)
        )
    }
}
