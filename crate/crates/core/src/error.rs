use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("degenerate variable {variable}: {reason}")]
    DegenerateVariable { variable: usize, reason: String },

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("impossible condition: conditioning event has zero probability")]
    ImpossibleCondition,

    #[error("invalid variable set: {0}")]
    InvalidVariableSet(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("subset enumeration over {n_vars} variables exceeds the cap of {cap} subsets")]
    SubsetExplosion { n_vars: usize, cap: u64 },

    #[error("tolerance exceeds state space: {0}")]
    ToleranceExceedsStateSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target carries no information")]
    ZeroTargetEntropy,

    #[error("degenerate rescale: {0}")]
    DegenerateRescale(String),

    #[error("degenerate family: {0}")]
    DegenerateFamily(String),

    #[error("non-finite objective: {0}")]
    NonFiniteObjective(String),

    #[error("data-processing violation: {0}")]
    DataProcessingViolation(String),

    #[error("numerical blow-up at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("invalid system spec: {0}")]
    InvalidSystem(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
