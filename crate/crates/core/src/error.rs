use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("the KSD target must have a zero mean vector")]
    TargetNotCentered,

    #[error("median heuristic produced a zero bandwidth (all points identical)")]
    DegenerateBandwidth,

    #[error("insufficient sample: need at least {needed} points, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("closed forms for RBF statistics require an identity covariance")]
    NonIdentityCovariance,

    #[error("degenerate denominator: {0} is zero")]
    DegenerateDenominator(&'static str),

    #[error("gamma matching needs a positive mean, got {0}")]
    GammaMatchInfeasible(f64),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("weighted chi-square sums have no analytic CDF; sample them first")]
    UnsupportedAnalyticCdf,

    #[error("unsupported summand: {0}")]
    UnsupportedSummand(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("moment `{0}` is not available in this moment set")]
    MomentUnavailable(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
