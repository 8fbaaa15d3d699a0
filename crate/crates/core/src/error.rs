use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("insufficient carrier separation: {0}")]
    CarrierSeparation(String),

    #[error("carrier at or beyond Nyquist: {0}")]
    CarrierNyquist(String),

    #[error("degenerate contrast; weights undefined (slice {0})")]
    DegenerateContrast(usize),

    #[error("stationary objective")]
    StationaryObjective,

    #[error("non-unit direction (norm {0})")]
    NonUnitDirection(f64),

    #[error("empty z ladder")]
    EmptyLadder,

    #[error("all-zero field")]
    ZeroField,

    #[error("bad magic in {0}")]
    BadMagic(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("config error at line {line}: {message}")]
    ConfigAt { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
