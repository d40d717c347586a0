//! Interface-anchored point cloud completion.
//!
//! [`SpacNet`] predicts the missing part of a partial scan from the scan and a
//! set of interface points on the boundary between what was seen and what is
//! missing. The output keeps the scan verbatim and appends `n_t * r` points.

pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod network;
pub mod train;

pub use config::{CoarseMode, ModelConfig};
pub use data::{overfit_dataset, prepare_sample, PreparedSample};
pub use error::{Error, Result};
pub use network::{ForwardOutput, SpacNet};
pub use train::{train, TrainConfig, TrainReport};
