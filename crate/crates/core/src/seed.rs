//! Stream derivation so that every task, group and step gets its own
//! reproducible RNG regardless of worker scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Domain tags that keep the derived streams of different purposes apart.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SFT_DATA: u64 = 2;
    pub const SFT_SHUFFLE: u64 = 3;
    pub const EVAL_DATA: u64 = 4;
    pub const GRPO_TASK: u64 = 5;
    pub const GRPO_SAMPLE: u64 = 6;
    pub const POOL: u64 = 7;
    pub const DATASET: u64 = 8;
}
