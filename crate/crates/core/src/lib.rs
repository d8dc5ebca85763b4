//! Black-box inversion of a probability oracle by searching over diagonal
//! Gaussian latent distributions with two policy-gradient agents.
//!
//! The oracle maps latent codes to class probabilities. One agent proposes
//! means, the other spreads; both are trained with centralized critics from
//! oracle-derived rewards until codes drawn from the distribution are
//! classified as the target label.

pub mod error;
pub mod ndmath;
pub mod rng;

pub use error::{Error, Result};
pub mod latent;
pub mod oracle;
pub mod reward;
pub mod maddpg;
pub mod metrics;
