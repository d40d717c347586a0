use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit status: 1 validation, 2 I/O, 3 parse, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Parse { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn json(path: &Path, err: serde_json::Error) -> Self {
        if err.is_io() {
            return CliError::Io { path: path.to_path_buf(), source: err.into() };
        }
        CliError::Parse { path: path.to_path_buf(), line: err.line(), msg: err.to_string() }
    }
}

impl From<spacnet_core::Error> for CliError {
    fn from(e: spacnet_core::Error) -> Self {
        match e {
            spacnet_core::Error::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<spacnet_model::Error> for CliError {
    fn from(e: spacnet_model::Error) -> Self {
        use spacnet_model::Error as M;
        match e {
            M::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            M::Geometry(g) => g.into(),
            M::Tensor(ref t) if matches!(t, spacnet_tensor::Error::NonFinite { .. }) => {
                CliError::Numeric(e.to_string())
            }
            M::Io(source) => CliError::Io { path: PathBuf::from("<checkpoint>"), source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
