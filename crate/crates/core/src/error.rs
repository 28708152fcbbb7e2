use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("price {0} is not on the price grid")]
    InvalidPrice(u32),

    #[error("invalid environment configuration: {0}")]
    InvalidEnv(String),

    #[error("invalid agent parameters: {0}")]
    InvalidParams(String),

    #[error("Q-table initialization undefined for gamma = {0} (requires gamma < 1)")]
    InitUndefined(f64),

    #[error("invalid parameter grid: {0}")]
    InvalidGrid(String),

    #[error("episode record lacks {0}; rerun with full or aggregate fidelity")]
    InsufficientFidelity(&'static str),

    #[error("checkpoint {path} is corrupt: {reason}")]
    CheckpointCorrupt { path: PathBuf, reason: String },

    #[error("cannot resume: {0} differs from the checkpointed sweep")]
    ResumeMismatch(String),

    #[error("malformed payoff tensor: {0}")]
    MalformedTensor(String),

    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    #[error("sample is empty")]
    EmptySample,

    #[error("analysis window {window} exceeds {available} rounds available after burn-in")]
    WindowTooLarge { window: usize, available: usize },

    #[error("price streams do not share a grid: {0}")]
    GridMismatch(String),

    #[error("baseline {0} requires a reference profile")]
    MissingReference(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
