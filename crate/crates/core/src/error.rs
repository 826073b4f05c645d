use thiserror::Error;

/// Errors raised by the filtering library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A user-supplied model function returned NaN or infinity.
    #[error("function evaluation is not finite at point {point:?}")]
    NonFinite { point: Vec<f64> },

    /// Every hypothesis assigned (numerically) zero likelihood to the measurement.
    #[error("degenerate update: largest log-likelihood {max_log_likelihood} is below the floor")]
    DegenerateUpdate { max_log_likelihood: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn numerical(msg: impl Into<String>) -> Error {
    Error::Numerical(msg.into())
}
