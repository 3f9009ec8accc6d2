use thiserror::Error;

/// Errors produced by the measure algebra, the oracles and the particle engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate measure: {0}")]
    Degenerate(String),

    #[error("potential ratio g_({p},{n}) overflows: smallest scaled entry below 1e-300")]
    RatioOverflow { p: usize, n: usize },

    #[error("exact oracle limit exceeded: {0}")]
    OracleLimit(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("flow extinct at step {step}: every particle has zero potential")]
    Extinction { step: usize },

    #[error("proposal kernel is not reversible with respect to the reference measure (worst defect {defect:e})")]
    NotReversible { defect: f64 },

    #[error("no minorization for k0 = {k0}: some column of K^k0 has a zero entry everywhere; try a larger k0")]
    NoMinorization { k0: usize },

    #[error("MCMC iteration budget exceeded{}: required {required:e} iterations", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    BudgetExceeded { step: Option<usize>, required: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
