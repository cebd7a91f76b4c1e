use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wrong IDX magic: expected {expected}, found {found}")]
    WrongMagic { expected: u32, found: u32 },

    #[error("truncated file: header promises {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },

    #[error("label {value} at index {index} is not a digit class")]
    LabelOutOfRange { index: usize, value: u8 },

    #[error("digit class {0} has no samples")]
    EmptyClass(u8),

    #[error("training window is empty")]
    EmptyWindow,

    #[error("training window has zero variance in every direction")]
    DegenerateWindow,

    #[error("kernel matrix has {available} positive eigenvalues, {requested} requested")]
    RankDeficient { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },

    #[error("persistence needs at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("non-finite value in input")]
    NonFiniteInput,

    #[error("both samples need at least 2 values (got {a} and {b})")]
    SampleTooSmall { a: usize, b: usize },

    #[error("series of length {0} is too short to segment")]
    SeriesTooShort(usize),

    #[error("eigen-solver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("no MNIST files found in {0}")]
    MissingData(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::ConfigInvalid(msg.into())
    }

    pub fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Self::Format {
            what,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the CLI: 2 for configuration problems, 3 for
    /// everything data-related.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigInvalid(_) => 2,
            _ => 3,
        }
    }
}
