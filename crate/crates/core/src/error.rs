use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample matrix: {0}")]
    InvalidMatrix(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("component {component} has degenerate variance (std {std:e} <= {threshold:e})")]
    DegenerateVariance {
        component: usize,
        std: f64,
        threshold: f64,
    },

    #[error("row {row} has zero norm and cannot be projected to the unit sphere")]
    ZeroVector { row: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("mean inseparability {0} is not positive")]
    InvalidInseparability(f64),

    #[error("no alpha in the grid produced a valid dimension estimate")]
    NoValidAlpha,

    #[error("every point has a degenerate neighborhood (zero neighbor distance)")]
    AllDegenerate,

    #[error("class {class} could not be estimated: {source}")]
    ClassTooSmall {
        class: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("class {class} has a zero normalized ID")]
    DegenerateClass { class: usize },

    #[error("class {class}: requested {requested} samples, only {available} available")]
    InsufficientSamples {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    RaggedRows {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("input file is empty")]
    EmptyFile,

    #[error("file size {size} is not a multiple of the {record}-byte record size")]
    BadRecordSize { size: u64, record: usize },

    #[error("record {record}: label {label} is out of range")]
    LabelOutOfRange { record: usize, label: u32 },

    #[error("invalid container: {0}")]
    Container(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
