//! Crate-wide error type.

use crate::master::DmpSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(
        "master problem did not converge: kkt residual {residual:.3e} after {iterations} iterations"
    )]
    DmpNoConvergence {
        residual: f64,
        iterations: usize,
        /// Best iterate found so far; usable at the caller's discretion.
        best: Box<DmpSolution>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn instance(msg: impl Into<String>) -> Self {
        Error::InvalidInstance(msg.into())
    }
}
