//! Seeded random streams.
//!
//! Every consumer derives its generator from a `(seed, stream)` pair so that
//! adding a consumer never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the fixed consumers. Label variants use their index.
pub mod streams {
    pub const HOLDOUT_SPLIT: u64 = 0xD1CE_0000_0000_0001;
    pub const SYNTH: u64 = 0xD1CE_0000_0000_0002;
    pub const PERMUTATION: u64 = 0xD1CE_0000_0000_0003;
    pub const LEARNER_BASE: u64 = 0xD1CE_0001_0000_0000;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th consumer derived from `seed` (SplitMix64 step).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
