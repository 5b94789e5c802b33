use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("step sequence is not strictly decreasing at index {index}")]
    NonDecreasingSteps { index: usize },
    #[error("horizon {horizon} not reached within {max_steps} steps")]
    HorizonUnreachable { horizon: f64, max_steps: usize },
    #[error("integrator failure at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("explosion: |x| = {value} exceeded bound {bound} at t = {t}")]
    Explosion { value: f64, bound: f64, t: f64 },
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_input",
            Error::NonDecreasingSteps { .. } => "non_decreasing_steps",
            Error::HorizonUnreachable { .. } => "horizon_unreachable",
            Error::Integrator { .. } => "integrator",
            Error::NonFinite { .. } => "non_finite",
            Error::Explosion { .. } => "explosion",
            Error::Degenerate(_) => "degenerate",
            Error::Quadrature(_) => "quadrature",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
