use std::fmt;

/// Library error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument was violated.
    InvalidArgument(String),
    /// A non-finite value surfaced during simulation or optimization.
    /// `step` names the simulation step or optimizer iteration when known.
    NumericalFailure { step: Option<usize>, message: String },
    /// Malformed or inconsistent input data.
    Data(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NumericalFailure { step: Some(k), message } => {
                write!(f, "numerical failure at step {k}: {message}")
            }
            Error::NumericalFailure { step: None, message } => {
                write!(f, "numerical failure: {message}")
            }
            Error::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(step: Option<usize>, msg: impl Into<String>) -> Self {
        Error::NumericalFailure { step, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
