use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid size {0}: must be even and at least 4")]
    InvalidGrid(usize),

    #[error("non-finite value in field at index {0}")]
    NonFinite(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical divergence at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("ground-truth generation blew up for seed {seed} at t = {time}")]
    TrajectoryBlowUp { seed: u64, time: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("trailing eigenvalue of mode {mode} is numerically zero ({value:e})")]
    SingularMode { mode: usize, value: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("retained forward state does not match the parameters it is used with")]
    StaleTape,

    #[error("model variant does not support this operation: {0}")]
    Unsupported(&'static str),

    #[error("bin grids differ")]
    GridMismatch,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::TrajectoryBlowUp { .. })
    }
}
