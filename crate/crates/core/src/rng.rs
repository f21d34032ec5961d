//! Seeded random streams.
//!
//! Every probabilistic step draws from its own ChaCha stream derived from the
//! user seed, so adding draws to one step never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StepRng = ChaCha8Rng;

/// Stream ids. Fixed forever: changing one changes every artifact.
pub mod stream {
    pub const DATASET_POINTS: u64 = 1;
    pub const DATASET_LABELS: u64 = 2;
    pub const FIRST_LAYER: u64 = 10;
    pub const COMPRESSION: u64 = 11;
    pub const CLUSTERS: u64 = 20;
    pub const PRESSURE_PLANES: u64 = 21;
    pub const SPHERE: u64 = 30;
}

pub fn step_rng(seed: u64, stream: u64) -> StepRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th independent sub-run (trial, sweep cell, ...).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
