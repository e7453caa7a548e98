use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("{path}: malformed input at byte offset {offset}: {reason}")]
    Format { path: PathBuf, offset: u64, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("non-finite iterate at round t={t}, local update e={e}, agent p={p}")]
    NonFinite { t: usize, e: usize, p: usize },

    #[error("server and agent {p} disagree on the dual variable after round {t}")]
    DualMismatch { t: usize, p: usize },

    #[error("iterative solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("{0}")]
    Unavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Short category name, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } | Error::Usage(_) => "usage",
            Error::Format { .. } | Error::Json(_) | Error::Csv(_) => "format",
            Error::Config { .. } => "config",
            Error::NonFinite { .. } | Error::DualMismatch { .. } | Error::NotConverged { .. } => "numerical",
            Error::Unavailable(_) => "unavailable",
            Error::Io(_) => "io",
        }
    }
}
