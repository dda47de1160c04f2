//! Seeded random number generation.
//!
//! All stochastic routines use ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded from a
//! `u64` via `SeedableRng::seed_from_u64`. Sweeps derive the seed of trial `i`
//! as `seed ^ i`, so results do not depend on scheduling.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as QRng;

/// Name of the generator, echoed into reports.
pub const ALGORITHM: &str = "chacha8";

pub fn seeded(seed: u64) -> QRng {
    QRng::seed_from_u64(seed)
}

/// Seed for trial `index` of a sweep started from `seed`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}
