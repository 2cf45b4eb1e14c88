//! Library backing the `ordsr` binary: the five-step inference pipeline,
//! the geometric self-ensemble, the self-check battery, and analysis
//! helpers. Kept as a library so integration tests can drive the pieces
//! directly.

pub mod analyze;
pub mod check;
pub mod pipeline;

/// Command outcomes map to the stable exit-code contract:
/// 0 success, 1 check/runtime failure, 2 usage error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<ordsr_core::Error> for CliError {
    fn from(e: ordsr_core::Error) -> Self {
        match e {
            ordsr_core::Error::InvalidArgument(_) | ordsr_core::Error::DimensionMismatch(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
