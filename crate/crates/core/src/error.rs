use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("exercise index {index} out of range for {count} exercises")]
    ExerciseOutOfRange { index: usize, count: usize },

    #[error("sequence too short: {len} interactions, need at least {min}")]
    SequenceTooShort { len: usize, min: usize },

    #[error("no usable training sequences (every sequence has fewer than 2 interactions)")]
    NoTrainingData,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("AUC undefined: {positives} positive and {negatives} negative records")]
    SingleClass { positives: usize, negatives: usize },

    #[error("too few students for {folds}-fold cross-validation: {students}")]
    TooFewStudents { students: usize, folds: usize },

    #[error("empty exercise pool")]
    EmptyPool,

    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: cannot parse correctness value '{value}'")]
    BadCorrectness {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown exercise tag '{tag}'")]
    UnknownTag { tag: String },

    #[error("model file version mismatch: expected {expected}, found '{found}'")]
    VersionMismatch { expected: String, found: String },

    #[error("model file corrupted at line {line}: {message}")]
    CorruptModel { line: usize, message: String },

    #[error("model shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable kind, used for the CLI's single-line error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ExerciseOutOfRange { .. } => "exercise_out_of_range",
            Error::SequenceTooShort { .. } => "sequence_too_short",
            Error::NoTrainingData => "no_training_data",
            Error::Diverged { .. } => "diverged",
            Error::InvalidConfig(_) => "invalid_config",
            Error::SingleClass { .. } => "single_class",
            Error::TooFewStudents { .. } => "too_few_students",
            Error::EmptyPool => "empty_pool",
            Error::MissingColumn { .. } => "missing_column",
            Error::BadCorrectness { .. } => "bad_correctness",
            Error::EmptyFile { .. } => "empty_file",
            Error::Parse { .. } => "parse",
            Error::UnknownTag { .. } => "unknown_tag",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::CorruptModel { .. } => "corrupt_model",
            Error::ShapeInconsistency(_) => "shape_inconsistency",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
