//! Seed handling.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`] seeded from a
//! `u64`. Bulk work splits a master seed into per-item seeds with
//! [`derive_seed`], so sample `i` is reproducible on its own regardless of how
//! many samples were generated before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `(master, index)` into an independent 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams so that e.g. channel and noise draws for the same sample
/// never share a seed.
pub mod stream {
    pub const CHANNEL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SNR: u64 = 3;
    pub const COMBINER: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const PERTURB: u64 = 6;
    pub const INIT: u64 = 7;
    pub const PAIRS: u64 = 8;
}

/// Seed for `stream` of item `index` under `master`.
pub fn sub_seed(master: u64, stream: u64, index: u64) -> u64 {
    derive_seed(derive_seed(master, stream), index)
}
