use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite value after layer {layer} ({name})")]
    NonFinite { layer: usize, name: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("png error: {0}")]
    Png(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}

pub(crate) fn shape_err<T>(expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Result<T> {
    Err(Error::Shape { expected: format!("{expected:?}"), found: format!("{found:?}") })
}
