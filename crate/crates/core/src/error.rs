use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HdcceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at unit {unit}, time {time}, regressor {j}")]
    NonFinite { unit: usize, time: usize, j: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("loading covariance is not positive definite (rho = {rho}, dimension = {dim})")]
    NotPositiveDefinite { rho: f64, dim: usize },

    #[error("spectrum is identically zero")]
    ZeroSpectrum,

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, HdcceError>;
