use thiserror::Error;

/// Crate-wide error type. `category()` yields the stable machine-parsable
/// tag the CLI prints on failure.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch: {context}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid dimension: {0}")]
    InvalidDim(String),

    #[error("image size {size} is not divisible by patch size {patch}; nearest smaller valid size is {suggestion}")]
    IndivisibleImage {
        size: usize,
        patch: usize,
        suggestion: usize,
    },

    #[error("graph already freed: backward was already called on this graph")]
    GraphConsumed,

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGrad(String),

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("replica drift detected: worker {worker} checksum {got:#018x} != worker 0 checksum {expected:#018x}")]
    ReplicaDrift {
        worker: usize,
        got: u64,
        expected: u64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable single-word category for machine-parsable CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. }
            | Error::InvalidDim(_)
            | Error::IndivisibleImage { .. } => "shape",
            Error::GraphConsumed | Error::NonScalarBackward(_) => "graph",
            Error::NonFiniteGrad(_) | Error::NonFiniteLoss(_) => "numeric",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Infeasible(_) => "infeasible",
            Error::ReplicaDrift { .. } => "drift",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Other(_) => "other",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
