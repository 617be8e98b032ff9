use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: instruction line has no mnemonic: {text:?}")]
    MalformedLine { line: usize, text: String },

    #[error("master opcode list is empty")]
    EmptyMaster,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("matrix has no rows")]
    EmptyMatrix,

    #[error("input is empty")]
    Empty,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("class {label} has {count} samples, at least {required} required")]
    InsufficientClass { label: u8, count: usize, required: usize },

    #[error("minority class has {count} samples, at least 2 required")]
    DegenerateMinority { count: usize },

    #[error("feature set is empty after {stage}")]
    EmptyFeatureSet { stage: String },

    #[error("invalid network dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("input not found: {}", .0.display())]
    InputNotFound(PathBuf),

    #[error("invalid input format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for input problems, 3 for degenerate data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InsufficientClass { .. }
            | Error::DegenerateMinority { .. }
            | Error::EmptyFeatureSet { .. }
            | Error::EmptyMaster
            | Error::EmptyDataset
            | Error::EmptyMatrix
            | Error::Empty => 3,
            _ => 2,
        }
    }
}
