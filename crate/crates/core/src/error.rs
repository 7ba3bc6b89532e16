use thiserror::Error;

use crate::container::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each variant maps to a distinct CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's shape or range precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// User-supplied data (text, corpus, config) was rejected.
    #[error("input error: {0}")]
    Input(String),

    /// A pluggable backend (encoder, head, generator) failed. `payload`
    /// carries the raw reply when one was received.
    #[error("backend error ({backend}): {message}")]
    Backend {
        backend: String,
        message: String,
        payload: Option<String>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn backend(backend: &str, msg: impl Into<String>, payload: Option<String>) -> Self {
        Error::Backend {
            backend: backend.to_string(),
            message: msg.into(),
            payload,
        }
    }

    /// Short machine-readable kind used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Input(_) => "input",
            Error::Backend { .. } => "backend",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 2,
            Error::Format(_) => 3,
            Error::Backend { .. } => 4,
            Error::Contract(_) => 5,
            Error::Io(_) => 6,
        }
    }
}
