//! Point-cloud primitives for the SPAC-Net completion pipeline.
//!
//! The crate holds everything that runs in 64-bit geometry space:
//!
//! - [`point`]: `Point3` / `PointCloud` data types.
//! - [`geometry`]: distances, k-nearest neighbours, radius queries, farthest point
//!   sampling and unit-cube normalization.
//! - [`synth`]: procedural shapes and the two partial-scan protocols (sphere cut
//!   around an occlusion point, viewpoint cut).
//! - [`interface`]: interface localization, either from a known occlusion point or
//!   by projected angular-gap edge detection.
//! - [`metrics`]: Chamfer distances, F-Score, Fidelity and minimal matching distance.

pub mod error;
pub mod geometry;
pub mod interface;
pub mod metrics;
pub mod point;
pub mod seed;
pub mod spatial_grid;
pub mod synth;

pub use error::{Error, Result};
pub use point::{Point3, PointCloud, PointLabel};
