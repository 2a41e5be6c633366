//! Deterministic seed derivation.
//!
//! Every random stream in a run (client sampling, per-client shuffles,
//! augmentation noise) is keyed by the global seed plus a small tag tuple, so
//! results never depend on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with an ordered list of tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng(base: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(base, tags))
}

/// Stream tags. Distinct constants keep unrelated streams apart.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SAMPLE_CLIENTS: u64 = 2;
    pub const CLIENT_TRAIN: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const RESAMPLE: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
    pub const TEST_SPLIT: u64 = 8;
}
