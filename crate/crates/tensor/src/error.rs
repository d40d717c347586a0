use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{0}")]
    InvalidParameter(String),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] spacnet_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, left: &[usize], right: &[usize]) -> Result<T> {
    Err(Error::Shape { op, left: left.to_vec(), right: right.to_vec() })
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
