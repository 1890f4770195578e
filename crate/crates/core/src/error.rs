use thiserror::Error;

pub type Result<T, E = UqError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum UqError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("cannot parse `{value}` as a number (row {row}, column `{column}`)")]
    UnparseableNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset is empty after dropping non-finite rows")]
    EmptyDataset,

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Cholesky factorisation failed after jitter escalation")]
    CholeskyFailure,

    #[error("{got} features exceed the Gaussian-process limit of {max}")]
    TooManyFeatures { got: usize, max: usize },

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("interval has no raw bounds")]
    MissingRawBounds,

    #[error("no descriptor is shared by the top {top_k} of every model")]
    EmptyIntersection { top_k: usize },

    #[error("reports are not comparable: {0}")]
    MismatchedPartitions(String),
}

impl UqError {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            UqError::Io(_) => "Io",
            UqError::Csv(_) => "Csv",
            UqError::Json(_) => "Json",
            UqError::MissingColumn(_) => "MissingColumn",
            UqError::UnparseableNumeric { .. } => "UnparseableNumeric",
            UqError::EmptyDataset => "EmptyDataset",
            UqError::MalformedDataset(_) => "MalformedDataset",
            UqError::TooFewSamples { .. } => "TooFewSamples",
            UqError::InvalidConfig(_) => "InvalidConfig",
            UqError::LengthMismatch { .. } => "LengthMismatch",
            UqError::EmptyInput => "EmptyInput",
            UqError::DimensionMismatch { .. } => "DimensionMismatch",
            UqError::CholeskyFailure => "CholeskyFailure",
            UqError::TooManyFeatures { .. } => "TooManyFeatures",
            UqError::NonFiniteObjective => "NonFiniteObjective",
            UqError::MissingRawBounds => "MissingRawBounds",
            UqError::EmptyIntersection { .. } => "EmptyIntersection",
            UqError::MismatchedPartitions(_) => "MismatchedPartitions",
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            UqError::Io(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(UqError::LengthMismatch { expected, got });
    }
    Ok(())
}
