use thiserror::Error;

/// Errors produced by the numerical kernels, solvers and file codecs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rank deficiency detected at column {column} (residual norm {norm:e} below drop tolerance {tol:e})")]
    RankDeficient { column: usize, norm: f64, tol: f64 },

    #[error("SVD iteration did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("size cap exceeded: {requested} entries requested, cap is {cap}")]
    CapExceeded { requested: usize, cap: usize },

    #[error("zero vector: {0}")]
    ZeroVector(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::InvalidConfig(_)
            | Error::CapExceeded { .. }
            | Error::ZeroVector(_)
            | Error::Undefined(_) => ErrorClass::Validation,
            Error::RankDeficient { .. }
            | Error::SvdNoConvergence { .. }
            | Error::NonFinite { .. }
            | Error::Generation(_) => ErrorClass::Numerical,
            Error::Format(_) | Error::Io(_) | Error::Json(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
