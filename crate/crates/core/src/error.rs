use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("head of an empty configuration")]
    EmptyConfiguration,

    #[error("protocol admits no reduction: {0}")]
    UnsupportedReduction(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative rate: {0}")]
    NegativeRate(String),

    #[error("routing matrix not transient (R^n did not vanish after {doublings} squarings)")]
    NonTransientRouting { doublings: u32 },

    #[error("singular traffic equations")]
    SingularTraffic,

    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),

    #[error("reachable set exceeded the state budget of {budget} states at step {step}")]
    BudgetExceeded { budget: usize, step: usize },

    #[error("lower state is not a subconfiguration of the upper state")]
    NotSubconfiguration,

    #[error("coupling requires a head-of-queue type station, station {station} is not")]
    CouplingPrecondition { station: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no bracket found: estimate stayed at or above {epsilon} up to scale {max_scale}")]
    BracketFailure { epsilon: f64, max_scale: f64 },

    #[error("truncation error bound {bound:e} exceeds tolerance {tol:e}")]
    ToleranceNotMet { bound: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
