use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("too few grid points: {0} (need at least 16)")]
    TooFewPoints(usize),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("operator is not positive: smallest eigenvalue {0:e}")]
    NonpositiveOperator(f64),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate lost positivity at iteration {0}")]
    PositivityLost(usize),
    #[error("degenerate ground state: weighted eigenvalue lambda_{k} = {lambda} is within tolerance of 3")]
    DegenerateGroundState { k: usize, lambda: f64 },
    #[error("beta = {0} is a pole of g")]
    Pole(f64),
    #[error("beta = {beta} outside the admissible range {range}")]
    OutOfDomain { beta: f64, range: String },
    #[error("lambda = {0} has no preimage under f (need lambda > 1)")]
    LambdaNotAboveOne(f64),
    #[error("coupling constants are not all equal")]
    UnequalMu,
    #[error("direction must be strictly positive")]
    NonpositiveDirection,
    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),
    #[error("eigenbasis has {got} vectors, expected {expected}")]
    WrongMultiplicity { expected: usize, got: usize },
    #[error("at bifurcation: f(beta) = {f} coincides with lambda_{k}")]
    AtBifurcation { k: usize, f: f64 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("components {i} and {j} are not locked (ratio defect {defect:e})")]
    RatioViolated { i: usize, j: usize, defect: f64 },
    #[error("component {0} vanishes")]
    ZeroComponent(usize),
    #[error("partition must have exactly two blocks, got {0}")]
    NotPairPartition(usize),
    #[error("empty kernel direction")]
    EmptyKernel,
    #[error("singular linear system")]
    Singular,
    #[error("continuation predictor diverged: {0}")]
    PredictorDiverged(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

pub type Result<T> = std::result::Result<T, Error>;
