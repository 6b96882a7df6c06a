use thiserror::Error;

/// Errors raised by the filtering library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A matrix that must be positive definite is not.
    #[error("degenerate {what}: minimum eigenvalue {floor:e}")]
    Degenerate { what: &'static str, floor: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
