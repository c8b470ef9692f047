//! Deterministic seed derivation.
//!
//! Every random stream in a run descends from one master seed. Child seeds are
//! derived with the splitmix64 finalizer applied to `parent ^ (tag * GOLDEN)`,
//! so `derive(derive(master, subject), trial)` is stable regardless of the
//! order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, tag: u64) -> u64 {
    splitmix64(parent ^ tag.wrapping_add(1).wrapping_mul(GOLDEN))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tags for the independent streams of a training run.
pub mod stream {
    pub const INIT: u64 = 0x1;
    pub const SHUFFLE: u64 = 0x2;
}
