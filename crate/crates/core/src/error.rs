use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the data, probe, evaluation and parallax stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("size mismatch in {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("expected 15 label columns in fixed order: {0}")]
    LabelColumns(String),

    #[error("score out of range [1, 5]: {value} (article {id:?}, column {label:?})")]
    ScoreOutOfRange {
        id: String,
        label: String,
        value: f64,
    },

    #[error("unparseable number {text:?} (article {id:?}, column {label:?})")]
    BadNumber {
        id: String,
        label: String,
        text: String,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("no aligned articles between {model:?} embeddings and the label table")]
    NoAlignedArticles { model: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("zero-norm row {0}")]
    ZeroNormRow(usize),

    #[error("degenerate label: only class {present} present")]
    DegenerateLabel { present: u8 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid probe config: {0}")]
    InvalidConfig(String),

    #[error("k = {k} is larger than the number of samples {n}")]
    TooManyFolds { k: usize, n: usize },

    #[error("fold {fold} of label {label:?} has a single-class training split")]
    SingleClassFold { fold: usize, label: String },

    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("topic corpus {topic}: {reason}")]
    InvalidCorpus { topic: String, reason: String },

    #[error("missing corpus for {family} family on topic {topic}")]
    MissingCorpus { family: String, topic: String },

    #[error("no quality dataset for model {0:?}")]
    MissingQualityData(String),

    #[error("probe/store mismatch: {0}")]
    ProbeMismatch(String),

    #[error("family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("label mismatch: {left:?} vs {right:?}")]
    LabelMismatch { left: String, right: String },

    #[error("mixed pairings in delta series")]
    MixedPairings,

    #[error("malformed report data: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
