use thiserror::Error;

/// Errors raised by the solvers and harnesses.
///
/// The variants line up with the CLI exit codes: `Input` is a caller
/// mistake (exit 2), `Guard` is a refusal to run an enumeration that would
/// be too large (exit 3), and `Internal` is a solver failure (exit 1).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("guard exceeded: {0}")]
    Guard(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
