use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on caller-supplied data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested operation is not defined for this configuration,
    /// e.g. an analytic quantity asked of a kernel that has none.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A numerical routine could not produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File-system failure while reading configuration or emitting results.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
