use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wire {wire} out of range for {n}-qubit register")]
    WireOutOfRange { wire: usize, n: usize },

    #[error("gate wires must be distinct (got {0} twice)")]
    DuplicateWire(usize),

    #[error("{kind} gate {detail}")]
    AngleMismatch { kind: &'static str, detail: &'static str },

    #[error("{what}: expected {expected} values, got {got}")]
    SlotCountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid ansatz: {0}")]
    InvalidSpec(String),

    #[error("non-finite input feature at index {0}")]
    NonFiniteInput(usize),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("dataset has no rows for session {0}")]
    MissingSession(u8),

    #[error("class {0} absent from training data")]
    MissingClass(u8),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("need at least {need} trials with a finite objective, have {have}")]
    TooFewTrials { need: usize, have: usize },

    #[error("trial store {path}: {msg}")]
    Store { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
