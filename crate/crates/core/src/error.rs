use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty variable selection")]
    EmptySelection,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid axes: {0}")]
    InvalidAxes(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tensor has negative entry {value} at flat index {index}")]
    NonNegativityViolation { index: usize, value: f64 },

    #[error("hypothesized rank {rank} out of range for dims {dims:?}")]
    RankOutOfRange { rank: usize, dims: Vec<usize> },

    #[error("tensor carries no samples")]
    ZeroSamples,

    #[error("goodness-of-fit test needs at least 3 axes, got {0}")]
    TooFewAxes(usize),

    #[error("unknown node: {0}")]
    UnknownNode(String),

    #[error("node sets overlap")]
    OverlappingSets,

    #[error("graph has a directed cycle")]
    Cycle,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("missing separating set for pair ({0}, {1})")]
    MissingSepset(String, String),

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("model violates an LSM invariant: {0}")]
    InvalidModel(String),

    #[error("degenerate model: estimated latent support is 1")]
    DegenerateModel,

    #[error("CI query not testable: hypothesized rank {rank} >= bound {bound}")]
    Untestable { rank: usize, bound: usize },

    #[error("invalid CI query: {0}")]
    InvalidQuery(String),

    #[error("node mismatch: {0}")]
    NodeMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
