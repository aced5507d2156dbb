use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("bump of width {eta:e} covers only {cells} cells (need at least {needed})")]
    Resolution {
        eta: f64,
        cells: usize,
        needed: usize,
    },

    #[error("inadmissible data: {0}")]
    Admissibility(String),

    #[error("non-positive time increment {0:e}")]
    NonPositiveDt(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("config validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
