use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller supplied inconsistent input (wrong dimension, bad name, zero scale...).
    #[error("usage error: {0}")]
    Usage(String),
    /// A structural guard of the model or formula does not hold.
    #[error("degenerate: {0}")]
    Degenerate(String),
    /// Argument outside the domain of a closed-form expression.
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    /// A numerical procedure failed (divergence, step underflow...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A search terminated normally without finding the requested object.
    #[error("not found: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

pub(crate) fn degenerate<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Degenerate(msg.into()))
}
