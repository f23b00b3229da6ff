use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input at a known line (1-based).
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(String),

    /// Input that is well-formed but semantically invalid (bad values,
    /// duplicate keys, mixed metric modes, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The inputs are valid on their own but violate a precondition of the
    /// requested operation (sample sizes, shape mismatches, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for errors caused by the contents of the input itself rather than
    /// by the requested operation.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Precondition(_))
    }
}
