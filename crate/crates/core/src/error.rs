use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the sketching and solving pipeline.
#[derive(Debug, Error)]
pub enum FdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sketch state error: {0}")]
    State(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl FdError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        FdError::InvalidArgument(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        FdError::InvalidInput(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        FdError::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FdError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the arithmetic rather than by the caller.
    pub fn is_numeric(&self) -> bool {
        matches!(self, FdError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, FdError>;
