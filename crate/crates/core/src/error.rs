use thiserror::Error;

/// Errors raised by validation, numerical routines and file I/O.
#[derive(Debug, Error)]
pub enum QqeError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("at least {required} points are required, got {n}")]
    TooFewPoints { n: usize, required: usize },
    #[error("class {class} has {size} members, at least {required} are required")]
    ClassTooSmall { class: i64, size: usize, required: usize },
    #[error("{labels} labels supplied for {points} points")]
    LabelLengthMismatch { points: usize, labels: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid plotting-position scheme: denominator {denominator} is not positive")]
    InvalidScheme { denominator: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("k = {k} must satisfy 1 <= k < n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid CDF table: {0}")]
    InvalidTable(String),
    #[error("unknown shape `{0}`")]
    UnknownShape(String),
    #[error("invalid parameters for `{shape}`: {reason}")]
    InvalidShapeParams { shape: String, reason: String },
    #[error("reference dimension {dim} is constant; no line can be fitted")]
    DegenerateReference { dim: usize },
    #[error("no reference sample supplied for class {class}")]
    MissingClassReference { class: usize },
    #[error("expected {expected} rows, found {actual}")]
    RowCountMismatch { expected: usize, actual: usize },
    #[error("target dimension {p} must lie in 1..={max}")]
    InvalidTargetDim { p: usize, max: usize },
    #[error("not a permutation: {0}")]
    InvalidPermutation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = QqeError> = std::result::Result<T, E>;
