use thiserror::Error;

/// Errors raised while evaluating fields and order terms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("derivative/order unavailable: {field} cannot supply a derivative of total order {order} (max {max})")]
    MissingDerivative { field: String, order: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors raised by noise construction and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("covariance matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NonPsdCovariance { pivot: usize, value: f64 },
    #[error("covariance matrix is not symmetric at ({row}, {col})")]
    NonSymmetricCovariance { row: usize, col: usize },
    #[error("invalid noise specification: {0}")]
    Invalid(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

/// Errors raised by the integrators and the expansion solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("derivative/order unavailable: expansion order {requested} exceeds model epsilon order {available}")]
    OrderUnavailable { requested: usize, available: usize },
    #[error("coefficient path has {got} entries, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("jump factor 1 + G*dJ vanishes at event {event}; fundamental matrix is singular afterwards")]
    SingularJump { event: usize },
    #[error("fundamental matrix is near singular at grid point {step} (residual {residual:e})")]
    NearSingular { step: usize, residual: f64 },
    #[error("no closed-form fundamental matrix: {0}")]
    NoClosedForm(String),
}

/// Errors raised by the remainder study.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient paths at eps = {eps}: {excluded} of {total} replicates blew up")]
    InsufficientPaths { eps: f64, excluded: usize, total: usize },
    #[error("mean sup-deviation for order {k} increases along the eps ladder at {violations} steps")]
    NonMonotoneLadder { k: usize, violations: usize },
}
