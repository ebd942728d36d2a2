use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("variable `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("variable `{0}` contains non-finite values")]
    NonFinite(String),

    #[error("degenerate subset {0:?}: covariance is not positive definite")]
    DegenerateSubset(Vec<String>),

    #[error("deterministic fit for target `{0}`: residual variance is zero")]
    DeterministicFit(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("process is not stationary (companion spectral radius {0:.6} >= 1)")]
    NonStationary(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no candidate sources remain to extend the multiplet")]
    Exhausted,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
