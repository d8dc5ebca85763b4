//! Seeded random sources.
//!
//! Every run owns exactly one [`RunRng`]: ChaCha with 8 rounds
//! (`rand_chacha::ChaCha8Rng`), whose output stream is fixed for a given
//! seed independent of platform. Normal variates come from
//! `rand_distr::StandardNormal` (ziggurat), an exact transform of the
//! uniform stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type RunRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard-normal draw.
pub fn standard_normal(rng: &mut RunRng) -> f64 {
    StandardNormal.sample(rng)
}
