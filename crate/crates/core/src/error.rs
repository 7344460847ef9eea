//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the algorithms, builders and file readers.
#[derive(Debug, Error)]
pub enum Error {
    /// A per-step payoff or outcome left its admissible range.
    #[error("value {value} at step {step} is outside [-{bound}, {bound}]")]
    OutOfRange { step: u64, value: f64, bound: f64 },

    /// A NaN or infinite value reached an input that must be finite.
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    /// A parameter is malformed on its own.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A documented precondition of an algorithm does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input vectors or matrices disagree in length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The state was already stopped and cannot accept further steps.
    #[error("state is stopped")]
    Stopped,

    /// Malformed file contents.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks that `value` is finite and lies in `[-bound, bound]`.
pub(crate) fn bounded(step: u64, value: f64, bound: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite { what: "payoff", value });
    }
    if value.abs() > bound {
        return Err(Error::OutOfRange { step, value, bound });
    }
    Ok(value)
}
