//! Dense tensors, a reverse-mode tape and the point-set layers of the
//! completion network.
//!
//! Training runs in `f32`; every op is generic over [`Real`] so the same code
//! runs in `f64` for finite-difference checks.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod nn;
pub mod params;
pub mod real;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{AdamW, Graph, ParamStore};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
