use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has zero l2 norm")]
    ZeroColumn(usize),

    #[error("input contains NaN or infinite values")]
    NonFiniteInput,

    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("normal system is numerically singular (Cholesky failed after jitter retry)")]
    SingularSystem,

    #[error("regularization weight must be {requirement}, got {value}")]
    InvalidLambda {
        value: f64,
        requirement: &'static str,
    },

    #[error("query vector is zero")]
    ZeroQuery,

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("residual entry {index} is negative ({value})")]
    NegativeResidual { index: usize, value: f64 },

    #[error("bad magic bytes, not a CWCF file")]
    BadMagic,

    #[error("unsupported CWCF version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported CWCF dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("declared shape {rows}x{cols} overflows or disagrees with file size")]
    ShapeOverflow { rows: u64, cols: u64 },

    #[error("label file is empty")]
    EmptyFile,

    #[error("count mismatch: {what} has {got}, expected {expected}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("label {0} does not occur in the training labels")]
    UnknownLabel(i64),

    #[error("labels differ at sample index {0}")]
    LabelMismatch(usize),

    #[error("class with external label {0} is too small for the requested split")]
    ClassTooSmall(i64),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Errors coming from the numerics rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularSystem)
    }

    /// Process exit status for the CLI: 3 for numerical failures, 2 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
