//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by transform, network, and pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A serialized container is malformed or has the wrong kind/version.
    #[error("format error: {0}")]
    Format(String),

    /// Training diverged (NaN/Inf loss); the diagnostic checkpoint path is included.
    #[error("training diverged at phase {phase} step {step}; diagnostic checkpoint: {checkpoint}")]
    Diverged {
        phase: usize,
        step: usize,
        checkpoint: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
