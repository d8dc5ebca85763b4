//! Dense linear algebra, small feed-forward networks and their optimizer.
//!
//! Everything is `f64`; matrix products go through `matrixmultiply`, which is
//! single-threaded and deterministic for a given shape.

mod adam;
pub mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use matrix::DenseMatrix;
pub use mlp::{ForwardTrace, Gradients, Mlp, OutputActivation};
