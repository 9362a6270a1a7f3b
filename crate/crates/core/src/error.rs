use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("dataset is missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: unknown category `{value}` for feature `{feature}`")]
    UnknownCategory {
        row: usize,
        feature: String,
        value: String,
    },

    #[error("row {row}: cannot parse `{value}` as a finite number for feature `{feature}`")]
    UnparsableNumber {
        row: usize,
        feature: String,
        value: String,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("continuous feature `{0}` has a single distinct value and cannot be binned")]
    DegenerateFeature(String),

    #[error("support threshold {threshold} is below the floor 1/{rows}")]
    ThresholdBelowFloor { threshold: f64, rows: usize },

    #[error("support threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),

    #[error("model dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("input encoding does not match schema at feature `{0}`")]
    EncodingMismatch(String),

    #[error("row is not covered by the triple's if-conditions")]
    NotCovered,

    #[error("objective evaluated to {0}, normalizers too small")]
    NormalizerViolation(f64),

    #[error("cannot parse condition `{0}`")]
    Condition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("runs are not comparable: {0}")]
    IncompatibleRuns(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
