//! Deterministic seed streams.
//!
//! Every random decision in the crate draws from a ChaCha8 generator whose seed
//! is derived from a base seed plus a stream tag and an index. Two components
//! that use different tags never share a stream, so for example changing how
//! many models a layer trains never perturbs which learner kinds get drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; do not renumber.
pub mod stream {
    pub const INNER_SPLIT: u64 = 1;
    pub const MODEL_KIND: u64 = 2;
    pub const MODEL_FIT: u64 = 3;
    pub const WIDTH_PROBE: u64 = 4;
    pub const PCA_K: u64 = 5;
    pub const TREE: u64 = 6;
    pub const FOLDS: u64 = 7;
    pub const OOF_FIT: u64 = 8;
    pub const BOOTSTRAP: u64 = 9;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(base, stream, index)` into an independent 64-bit seed.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: u64, index: u64) -> Rng {
    rng(derive(base, stream, index))
}
