use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sizes, malformed inputs, or violated preconditions.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A solver result that contradicts the model it came from.
    #[error("integrity violation: {0}")]
    Integrity(String),

    /// Failures reported by (or about) a solver backend.
    #[error("solver error: {0}")]
    Solver(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
