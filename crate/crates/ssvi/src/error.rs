//! Crate-wide error type.

/// Errors produced by the variational engine and its models.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structural problem with an input (shape mismatch, bad mask, ...).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A numerical operation failed (singular factor, non-SPD matrix, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The optimizer hit a non-finite objective or parameter.
    #[error("optimization diverged at iteration {iter}: {detail}")]
    Diverged { iter: usize, detail: String },
    /// File I/O or parsing problem.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
