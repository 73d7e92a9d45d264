use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported reduction: {0}")]
    UnsupportedReduction(String),
    #[error("integral does not converge: {0}")]
    Integrability(String),
    #[error("quadrature rule has no nodes inside the domain: {0}")]
    EmptyRule(String),
    #[error("infeasible constraints: {0}")]
    InfeasibleConstraint(String),
    #[error("matrix is not positive semidefinite: pivot {pivot:e} at index {index}")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },
    #[error("matrix is not Hermitian: relative asymmetry {0:e}")]
    NotHermitian(f64),
    #[error("weight is not positive: {0}")]
    PositivityViolation(String),
    #[error("tabulated weight binding: {0}")]
    Binding(String),
    #[error("potential is not strictly plurisubharmonic: {0}")]
    NotStrictlyPsh(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("degenerate orthonormal system: {0}")]
    DegenerateSystem(String),
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),
    #[error("metric is not positive definite: {0}")]
    IndefiniteMetric(String),
    #[error("weights do not satisfy the transformation relation: {0}")]
    MismatchedWeights(String),
    #[error("point outside the domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("iteration failed at step {step}: {reason}")]
    IterationFailure { step: usize, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
