use thiserror::Error;

/// Errors raised by the estimation, spectral and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate design: off-diagonal pairs require N≥2")]
    DegenerateDesign,

    #[error("covariance estimate is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("grid mismatch: expected {expected} points, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range (available: 1..={available})")]
    IndexOutOfRange { index: usize, available: usize },

    #[error("eigen-gap violated: λ_{j} = λ_{k}")]
    EigenGapViolated { j: usize, k: usize },

    #[error("relative error undefined: true eigenvalue λ_{0} is zero")]
    ZeroEigenvalue(usize),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("insufficient data for rate fit: {0}")]
    InsufficientSpan(String),

    #[error("experiment failed: {failed} of {total} replicates failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("no observations")]
    NoObservations,

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        what,
        detail: detail.into(),
    }
}
