//! Deterministic sub-seeds so parallel work is independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for item `index` of stream `tag` under `base`.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ tag) ^ index)
}

pub fn derive_rng(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}

/// Stream tags.
pub(crate) mod tag {
    pub const SPLIT: u64 = 1;
    pub const PRECISION_CV: u64 = 2;
    pub const GAMMA: u64 = 3;
    pub const CALIBRATION: u64 = 4;
    pub const SCENARIO: u64 = 5;
    pub const ARL: u64 = 6;
    pub const MODEL: u64 = 7;
    pub const PHASE1_DATA: u64 = 8;
}
