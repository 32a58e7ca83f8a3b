//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A model fit could not produce a usable parameter set.
    #[error("model fit failed: {0}")]
    Fit(String),

    /// The rate allocation problem had no feasible solution.
    #[error("allocation failed: {0}")]
    Allocation(String),

    /// A predictor could not produce an output for the requested key.
    #[error("prediction failed: {0}")]
    Prediction(String),

    /// A trace file was malformed or failed validation.
    #[error("trace error in {path}: {message}")]
    Trace { path: String, message: String },

    /// Configuration file errors (syntax or semantic).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn trace(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Trace {
            path: path.into(),
            message: msg.into(),
        }
    }
}
