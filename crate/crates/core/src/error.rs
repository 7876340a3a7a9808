use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the simulation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A UE has zero achievable rate, so its upload time is undefined.
    #[error("UE {ue} is unserved (zero rate)")]
    UnservedUe { ue: usize },

    /// The asynchronous protocol ended up with nothing to schedule.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("round {round}: zero noise with nonzero sensitivity gives no privacy")]
    ZeroNoise { round: usize },

    #[error("privacy margin violated: epsilon {epsilon} <= lambda {lambda}")]
    MarginViolation { epsilon: f64, lambda: f64 },

    #[error("invalid convergence parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid expansion point: {0}")]
    InvalidExpansionPoint(String),

    #[error("inner solver failed after {iterations} Newton steps: {reason}")]
    SolverFailure { iterations: usize, reason: String },

    #[error("internal invariant breached: {0}")]
    Internal(String),

    #[error("UE {ue}: zero transmit power with a nonzero update cannot be descaled")]
    CannotDescale { ue: usize },

    #[error("sweep failed: every point errored")]
    SweepFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidConfig(_) => "invalid-config",
            Error::UnservedUe { .. } => "unserved-ue",
            Error::Protocol(_) => "protocol",
            Error::ZeroNoise { .. } => "zero-noise",
            Error::MarginViolation { .. } => "margin-violation",
            Error::InvalidParams(_) => "invalid-params",
            Error::Unsupported(_) => "unsupported",
            Error::InvalidExpansionPoint(_) => "invalid-expansion-point",
            Error::SolverFailure { .. } => "solver-failure",
            Error::Internal(_) => "internal-error",
            Error::CannotDescale { .. } => "cannot-descale",
            Error::SweepFailed => "sweep-failed",
            Error::Io(_) => "io",
        }
    }
}
