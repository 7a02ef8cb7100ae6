use thiserror::Error;

#[derive(Debug, Error)]
pub enum BsvError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is outside the support of the operational model")]
    OutOfSupport,

    #[error("kernel matrix is not positive definite after jitter {jitter:e} (pivot {pivot}, value {value:e}, diagonal ratio {condition:e})")]
    NotPositiveDefinite {
        jitter: f64,
        pivot: usize,
        value: f64,
        condition: f64,
    },

    #[error("grid too large: {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("score is NaN at grid index {index} ({point:?})")]
    NanScore { index: usize, point: Vec<f64> },

    #[error("degenerate sampling weights")]
    DegenerateWeights,

    #[error("operational model has no mass on grid")]
    NoMassOnGrid,

    #[error("proposal excludes support at index {0}")]
    ProposalExcludesSupport(usize),

    #[error("relative error undefined for a true probability of zero")]
    RelativeErrorUndefined,

    #[error("empty records")]
    EmptyRecords,

    #[error("system `{0}` is flagged expensive; ground-truth sweeps are refused")]
    ExpensiveSystem(String),

    #[error("system evaluation failed: {0}")]
    Evaluation(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BsvError> = std::result::Result<T, E>;
