use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No coordinate pair could be extracted from model output.
    #[error("no coordinate pair found in {text:?}")]
    Parse { text: String },

    /// Malformed or inconsistent records in an input file.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid_arg(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Self::InvalidInput(msg.into())
    }
}
