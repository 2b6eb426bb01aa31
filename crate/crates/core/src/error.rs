use thiserror::Error;

/// Errors produced by the codebook design and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate array layout: {0}")]
    DegenerateLayout(String),

    #[error("coverage constraint infeasible: best achievable residual {best:.6e} exceeds budget {budget:.6e}")]
    Infeasible { best: f64, budget: f64 },

    #[error("codebook region mismatch: {0}")]
    RegionMismatch(String),

    #[error("zero receive beam at index {0}")]
    ZeroBeam(usize),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
