use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("label {label} at index {index} is out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("tape is stale: recorded at parameter version {tape}, network is at {network}")]
    StaleTape { tape: u64, network: u64 },

    #[error("backward requires a tape recorded in training mode")]
    EvalTape,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("selection mask must keep at least one sample")]
    EmptySelection,

    #[error("not IDX: {0}")]
    NotIdx(String),

    #[error("{path}: line {line}: {reason}")]
    Csv {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("training diverged at epoch {epoch}: loss is not finite (last good checkpoint: epoch {last_good})")]
    Diverged { epoch: usize, last_good: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
