//! Seeded random streams.
//!
//! Every parallel work item draws from its own stream derived from
//! `(master seed, item index)`, so outputs do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a stream label into a new 64-bit seed.
pub fn derive(seed: u64, label: u64) -> u64 {
    splitmix(splitmix(seed) ^ splitmix(label.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// RNG for work item `index` of the stream family `family` under `seed`.
pub fn stream(seed: u64, family: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(derive(seed, family), index))
}

/// Stream family labels used across the crate.
pub mod family {
    pub const GRIDS: u64 = 1;
    pub const SPECIES: u64 = 2;
    pub const DETECTION: u64 = 3;
    pub const EFFORT: u64 = 4;
    pub const PA: u64 = 5;
    pub const PO: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const ACCUMULATION: u64 = 8;
    pub const SUBSPLIT: u64 = 9;
    pub const FOREST: u64 = 10;
    pub const CV: u64 = 11;
    pub const TRAIN: u64 = 12;
    pub const INIT: u64 = 13;
}
