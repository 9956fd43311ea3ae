use thiserror::Error;

/// Errors raised by the spectral classifier and the discretized solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A spectrum was queried beyond the range it is known to be complete on.
    #[error("spectrum incomplete: requested values up to {requested}, complete only up to {complete_below}")]
    IncompleteSpectrum {
        requested: String,
        complete_below: String,
    },

    /// Every `t > 0` is a degeneracy instant; carries the witnessing pair.
    #[error("degeneracy set is not discrete (witness b = {b}, lambda_hat = {lambda_hat})")]
    NondiscreteDegeneracy { b: String, lambda_hat: String },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("t = {0} is a degenerate point")]
    DegeneratePoint(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("scalar curvature vanishes at t = {0}")]
    ZeroScalarCurvature(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("conformal factor is not positive on the quadrature grid (min {min:e})")]
    PositivityViolation { min: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("no nontrivial solution found near the branch point")]
    NoNontrivialSolution,

    #[error("continuation failed at the first corrector step: {0}")]
    EmptyBranch(String),

    #[error("reduction hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("reduction failed: {0}")]
    ReductionFailed(String),

    #[error("fiber-energy fraction undefined for a constant state")]
    UndefinedFraction,
}

pub type Result<T> = std::result::Result<T, Error>;
