use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("need at least {need} workers, got {have}")]
    InsufficientWorkers { need: usize, have: usize },

    #[error("need at least {need} evaluations, got {have}")]
    InsufficientEvaluations { need: usize, have: usize },

    #[error("evaluation points are not distinct")]
    DegenerateCode,

    #[error("sparsity estimate {value} at unit {index} is outside (0, 1)")]
    SparsitySingularity { index: usize, value: f64 },

    #[error("rollback required at iteration {iteration}, layer {layer}: {reason}")]
    RollbackRequired {
        iteration: usize,
        layer: usize,
        reason: String,
    },

    #[error("unrecoverable: {0}")]
    Unrecoverable(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
