//! Seeded randomness shared by every stochastic step of the pipeline.
//!
//! All shuffles and initializations draw from ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`, so a 64-bit seed fully determines the
//! stream on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
