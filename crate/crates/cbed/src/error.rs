//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Exact enumeration is only feasible for small graphs.
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    #[error("corrupt graph: {0}")]
    CorruptGraph(String),
    #[error("parse error: {0}")]
    Parse(String),
    /// A metric is undefined for the given input (e.g. single-class labels).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Numerical breakdown, e.g. a kernel matrix that fails Cholesky.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
    /// A module error annotated with the acquisition round it occurred in.
    #[error("batch {batch}: {source}")]
    Batch { batch: usize, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
