use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("mark {mark} has lambda*dt = {value} >= 1; the scenario tree needs at most one jump per step")]
    IntensityTooLarge { mark: usize, value: f64 },

    #[error("scenario tree would need {nodes} nodes, above the cap of {cap}")]
    NodeCapExceeded { nodes: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("fixed-point iteration did not converge at level {level}, node {node} after {iterations} iterations (dt too large for the generator's y-sensitivity?)")]
    FixedPointDiverged {
        level: usize,
        node: usize,
        iterations: usize,
    },

    #[error("regression design is rank deficient at step {step} even with the constant basis")]
    RankDeficient { step: usize },

    #[error("{paths} paths are too few for a basis of dimension {dim} (need at least {min})")]
    TooFewPaths { paths: usize, dim: usize, min: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),

    #[error("solutions are not indexed alike: {0}")]
    MismatchedIndexing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
