use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    Validation(String),

    #[error("zero realized quadratic variation for curve {curve} at grid index {k}; raise alpha above t_{k} or drop the curve")]
    ZeroQuadraticVariation { curve: usize, k: usize },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("degenerate autocovariance: {0}")]
    DegenerateAutocovariance(String),

    #[error("negative innovation variance estimate {value:e} (below clamp tolerance)")]
    NegativeVariance { value: f64 },

    #[error("unsupported order p = {p}: {reason}")]
    UnsupportedOrder { p: usize, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::UnsupportedOrder { .. } | Error::InsufficientSample(_) => {
                ErrorClass::Validation
            }
            Error::ZeroQuadraticVariation { .. } | Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => {
                ErrorClass::Data
            }
            Error::DegenerateAutocovariance(_) | Error::NegativeVariance { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
