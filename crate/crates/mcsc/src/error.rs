//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, McscError>;

#[derive(Debug, Error)]
pub enum McscError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("need at least {k} distinct points, got {distinct}")]
    InsufficientPoints { distinct: usize, k: usize },

    #[error("label {label} outside 1..={k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("duplicate observation for individual {individual} at time {time}")]
    DuplicateObservation { individual: String, time: i64 },

    #[error("not column-stochastic: {0}")]
    NotStochastic(String),

    #[error("not a probability distribution: {0}")]
    NotDistribution(String),

    #[error("invalid distance matrix: {0}")]
    InvalidDistanceMatrix(String),

    #[error("resetting already applied to this event set")]
    ResettingAlreadyApplied,

    #[error("marginals infeasible: source sums to {src_sum}, destination to {dst_sum}")]
    InfeasibleMarginals { src_sum: f64, dst_sum: f64 },

    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    #[error("no convergence after {iterations} iterations of {context}")]
    NoConvergence {
        iterations: usize,
        context: &'static str,
    },

    #[error("candidate rejected: modified entry ({from}->{to}) reached zero where A is nonzero")]
    LogDivergence { from: usize, to: usize },

    #[error("cannot suppress transition {from}->{to}: effective probability is zero")]
    ZeroTransition { from: usize, to: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time grid point {0} outside the series time range")]
    GridOutOfRange(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}
