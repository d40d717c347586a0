use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    InvalidInput(String),
    #[error("non-finite loss on sample {sample_id} in epoch {epoch}")]
    NonFiniteLoss { sample_id: String, epoch: usize },
    #[error(transparent)]
    Tensor(#[from] spacnet_tensor::Error),
    #[error(transparent)]
    Geometry(#[from] spacnet_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
