use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error in protein {protein}: {reason}")]
    Validation { protein: usize, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// An I/O error that names the file involved.
    pub(crate) fn file(path: &std::path::Path, e: io::Error) -> Self {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
