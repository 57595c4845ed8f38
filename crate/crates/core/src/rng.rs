//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from the run
//! seed mixed with a purpose tag and an id (entity, epoch, ...), so results
//! do not depend on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with a sequence of ids.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, p| splitmix64(acc ^ splitmix64(*p)))
}

pub fn stream(seed: u64, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive(seed, parts))
}

/// Purpose tags for [`stream`].
pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const TASK: u64 = 2;
    pub const WALK: u64 = 3;
    pub const NEGATIVE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const PRETRAIN: u64 = 6;
    pub const TRAIN: u64 = 7;
    pub const NOISE: u64 = 8;
    pub const SYNTH: u64 = 9;
    pub const EVAL: u64 = 10;
}
