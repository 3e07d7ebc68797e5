use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {nx}x{ny}: both dimensions must be at least 2")]
    InvalidGrid { nx: usize, ny: usize },

    #[error("differencing order {order} needs at least {} points per axis, shortest axis has {axis_len}", order + 1)]
    InvalidOrder { order: usize, axis_len: usize },

    #[error("matrix is not positive definite: non-positive pivot at index {pivot}")]
    NotSpd { pivot: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel construction failed: {0}")]
    Kernel(String),

    #[error("design matrix is rank deficient ({rank} < {cols} columns)")]
    RankDeficientDesign { rank: usize, cols: usize },

    #[error("anchoring does not make Q positive definite (pivot {pivot})")]
    AnchoringInsufficient { pivot: usize },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("chain failed at iteration {iteration} in the {conditional} update: {source}")]
    Chain {
        iteration: usize,
        conditional: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value after the {conditional} update at iteration {iteration}")]
    NonFinite { iteration: usize, conditional: &'static str },

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("relative L1 success is undefined for a zero-norm truth")]
    UndefinedMetric,

    #[error("numeric integration did not converge at theta* = {theta}")]
    Integration { theta: f64 },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
