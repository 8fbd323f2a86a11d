use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {0:?} lies outside the computational box")]
    OutsideBox(Vec<f64>),

    #[error("operation requires dimension {expected}, grid has dimension {found}")]
    Dimension { expected: usize, found: usize },

    #[error("discretizations do not match: {0}")]
    Mismatch(String),

    #[error("potential needs {needed} time slices of f, {available} available")]
    MissingTimeSlices { needed: usize, available: usize },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("eigen-solve did not converge after {iterations} iterations")]
    EigenSolve { iterations: usize },

    #[error("ladder monotonicity violated: worst relative drop {worst:.3e} between levels {lower} and {upper}")]
    Monotonicity { lower: f64, upper: f64, worst: f64 },

    #[error("ladder divergence: {0}")]
    Divergence(String),

    #[error("kernel estimate not converged (relative cauchy gap {gap:.3e})")]
    NotConverged { gap: f64 },

    #[error("{count} nonpositive values where a strictly positive field is required ({context})")]
    NonPositive { count: usize, context: &'static str },

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("energy bound violated at t = {t}: ratio {ratio:.4} exceeds the allowed slack")]
    EnergyBound { t: f64, ratio: f64 },

    #[error("input support touches the box boundary")]
    SupportTouchesBoundary,

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
