use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("{0} is not applicable to an empty set")]
    NotApplicable(&'static str),

    #[error("degenerate transmission rate {0} bit/s")]
    DegenerateRate(f64),

    #[error("power allocation requested for zero offloading VUEs")]
    EmptyProblem,

    #[error("power allocation did not converge (best relative residual {residual:e})")]
    SolverFailure { residual: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("exceedance level {level} is below the sample resolution 1/{samples}")]
    Resolution { level: f64, samples: usize },

    #[error("instance too large to enumerate: {0}")]
    InstanceTooLarge(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64) -> Self {
        Error::Domain { what, value }
    }
}
