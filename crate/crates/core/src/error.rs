use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rank {k} out of range: expected 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("degenerate input: |R[{column},{column}]| = {pivot:e} is below the rank threshold")]
    Degenerate { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cannot L2-normalize a zero vector (row {row})")]
    ZeroVector { row: usize },

    #[error("need at least 2 training rows, got {n}")]
    TooFewRows { n: usize },

    #[error("invalid probability {value} at bit {bit}")]
    InvalidProbability { bit: usize, value: f64 },

    #[error("label count mismatch: {what} has {found} items, expected {expected}")]
    LabelMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Structured failures of the binary file readers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("header truncated: need {expected} bytes, have {actual}")]
    ShortHeader { expected: usize, actual: usize },

    #[error("payload truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: u64, actual: u64 },

    #[error("reserved byte at offset {offset} is {value:#04x}, must be zero")]
    Reserved { offset: usize, value: u8 },

    #[error("invalid header field {field}: {value}")]
    InvalidField { field: &'static str, value: u64 },

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("item {item} has nonzero padding bits")]
    Padding { item: usize },

    #[error("item {item}: class id {class} out of range (c = {classes})")]
    LabelRange {
        item: usize,
        class: u64,
        classes: u32,
    },

    #[error("item {item} has no label")]
    EmptyLabel { item: usize },

    #[error("mean vector must be zero when centering is disabled (index {index})")]
    NonZeroMean { index: usize },

    #[error("{which} is not orthonormal: max deviation {deviation:e} exceeds {tolerance:e}")]
    NotOrthogonal {
        which: &'static str,
        deviation: f64,
        tolerance: f64,
    },
}
