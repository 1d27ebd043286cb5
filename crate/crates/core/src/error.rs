use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("{what} did not converge within {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },

    #[error("argument {value} outside the reliable range ({limit})")]
    OutOfRange { value: f64, limit: String },

    #[error("precision loss in {what}: estimated relative error {estimate:.3e}")]
    PrecisionLoss { what: &'static str, estimate: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("operator backends disagree by {diff:.3e} (tolerance {tol:.1e})")]
    BackendDisagreement { diff: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("monotone iteration stopped after {iterations} iterations without meeting the tolerance")]
    NotConverged { iterations: usize, report: Box<crate::monotone::EnclosureReport> },
}

pub type Result<T> = std::result::Result<T, Error>;
