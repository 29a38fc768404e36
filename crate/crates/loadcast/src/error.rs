//! Error types shared across the crate.

use thiserror::Error;

/// Errors from the numeric core (tensors, kernels, optimizer, models).
#[derive(Debug, Error)]
pub enum NumError {
    #[error("non-finite input to {op}")]
    NonFinite { op: &'static str },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite {what} at step {step}")]
    Diverged { what: &'static str, step: usize },

    #[error("forward function is not deterministic: {0} vs {1}")]
    NonDeterministic(f64, f64),

    #[error("{0}")]
    Usage(String),
}

/// Errors from data loading, repair, embedding and splitting.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("missing column `{name}` in {path}")]
    MissingColumn { name: String, path: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate timestamp {ts}")]
    DuplicateTimestamp { ts: String },

    #[error("column `{name}` has a leading gap; no extrapolation is performed")]
    LeadingGap { name: String },

    #[error("column `{name}` has a trailing gap; no extrapolation is performed")]
    TrailingGap { name: String },

    #[error("column `{name}` is constant over the training range (std = 0)")]
    ConstantColumn { name: String },

    #[error("series has {len} rows but at least {need} are required")]
    TooShort { len: usize, need: usize },

    #[error("date ranges `{a}` and `{b}` overlap")]
    RangeOverlap { a: String, b: String },

    #[error("config error: {0}")]
    BadConfig(String),

    #[error("{0}")]
    Usage(String),
}

/// Errors from training loops.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss diverged (NaN) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("dataset `{0}` is empty")]
    EmptyDataset(&'static str),

    #[error("config error: {0}")]
    BadConfig(String),

    #[error(transparent)]
    Num(#[from] NumError),

    #[error(transparent)]
    Data(#[from] DataError),
}

/// Errors from checkpoint and cache serialization.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("bad magic bytes: not a {expected} file")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {got} (supported: {supported})")]
    BadVersion { got: u32, supported: u32 },

    #[error("file is truncated or corrupt: {0}")]
    Corrupt(String),
}

/// Errors from metric computation.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: truth has {truth} points, prediction has {pred}")]
    LengthMismatch { truth: usize, pred: usize },

    #[error("empty series")]
    Empty,
}
