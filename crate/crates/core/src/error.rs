use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt NIfTI header: {0}")]
    CorruptHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("voxel value {0} is not a valid label (labels must be integers in 0..=65535)")]
    NonIntegerLabels(f64),
    #[error("volume contains no nonzero voxels")]
    EmptyVolume,
    #[error("interpolation mode {0} is not valid for this voxel type")]
    ModeMismatch(&'static str),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid geometry: {0}")]
    InvalidGrid(String),
    #[error("voxel buffer length {actual} does not match grid size {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("sulcus label {0} has no substitution entry")]
    MissingSubstitution(u16),
    #[error("label {0} has no intensity prior")]
    MissingPrior(u16),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding row {0} has zero norm")]
    ZeroVector(usize),
    #[error("row index {index} out of range for a batch of {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("invalid embedding batch: {0}")]
    InvalidBatch(String),
    #[error("dice is undefined when both masks are empty")]
    BothEmpty,
    #[error("hausdorff distance is undefined: {0} set is empty")]
    EmptySet(&'static str),
    #[error("no valid entries for metric {0}")]
    NoValidEntries(&'static str),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
