use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlockError {
    #[error("time step h = {h} violates 0 < h <= 1/k for k = {k}")]
    InvalidTimestep { k: usize, h: f64 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("agent count mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state contains a non-finite coordinate")]
    NonFiniteState,
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("matrix is not symmetric: entry ({i},{j}) differs from ({j},{i}) by {diff}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("weights and mask disagree on the edge pattern at ({i},{j})")]
    PatternMismatch { i: usize, j: usize },
    #[error("series factor 1 - h*phi = {factor} at index {index} is outside [0,1]")]
    InvalidFactor { index: usize, factor: f64 },
    #[error("phi history has {got} entries, {needed} needed")]
    ShortHistory { needed: usize, got: usize },
    #[error("initial relative velocity is zero; the flock is already at consensus")]
    AlreadyFlocking,
    #[error("bound requires {expected}, got alpha = {alpha}")]
    WrongRegime { expected: &'static str, alpha: f64 },
    #[error("exhaustive enumeration limited to k <= {max}, got k = {k}")]
    TooManyAgents { k: usize, max: usize },
    #[error("non-finite state at step {step}")]
    Overflow { step: u64 },
    #[error("decay fit needs at least {needed} positive-norm points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },
    #[error("sweep cell {cell} run {run}: {source}")]
    RunFailed {
        cell: usize,
        run: usize,
        #[source]
        source: Box<FlockError>,
    },
}

pub type Result<T, E = FlockError> = std::result::Result<T, E>;
