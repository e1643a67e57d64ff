//! Seeded substream derivation for deterministic parallel sampling.
//!
//! Every randomized stage (split sampling, fold assignment, cohort
//! generation) seeds its own ChaCha stream from `(master_seed, index)`
//! through a splitmix-style 64-bit avalanche, so results do not depend
//! on thread scheduling or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Splitmix64 finalizer: a full-avalanche 64-bit mix.
pub fn mix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for substream `index` of the stream identified by `master`.
pub fn substream_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(mix64(index)))
}

/// Deterministic generator for substream `index` of `master`.
pub fn substream_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, index))
}

/// Fixed tags separating the independent purposes a master seed is split
/// into. Two stages sharing a master seed never share a stream.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const SUBJECT: u64 = 2;
    pub const IMAGE: u64 = 3;
    pub const CUBE: u64 = 4;
    pub const ASSIGNMENT: u64 = 5;
    pub const FOLD: u64 = 6;
    pub const COVARIATE: u64 = 7;
}
