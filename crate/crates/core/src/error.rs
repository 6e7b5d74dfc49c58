use thiserror::Error;

use crate::dsl::{DslError, EvalError};

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Parse(#[from] DslError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("point {point:?} leaves the sampling box")]
    OutOfDomain { point: Vec<f64> },
}

impl Error {
    /// True for errors caused by bad inputs rather than by a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::Usage(_)
                | Error::InvalidParameter(_)
                | Error::Parse(_)
                | Error::DegenerateDomain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
