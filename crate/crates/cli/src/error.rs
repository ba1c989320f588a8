use std::path::PathBuf;

use snode_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 config, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                CoreError::Io(_) | CoreError::Format(_) => 4,
                e if e.is_divergence() => 3,
                CoreError::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
