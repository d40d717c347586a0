//! Command-line plumbing: point files, manifests, synthetic datasets and the
//! synth / interface / train / complete / eval commands.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod points;

pub use error::{CliError, Result};
pub use manifest::ExperimentManifest;
