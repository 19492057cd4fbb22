use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("gain schedule overflows at t = {t}")]
    Overflow { t: f64 },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("integration diverged after t = {last_good_time}")]
    Diverged { last_good_time: f64 },

    #[error("fit window too late: {0}")]
    WindowTooLate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
