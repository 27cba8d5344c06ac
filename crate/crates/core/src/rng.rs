//! Seed plumbing. Every random choice in the crate comes from a
//! [`ChaCha8Rng`] seeded from an explicit `u64`; there is no ambient entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministically derives a child seed from a base seed, a stream tag and
/// an index (SplitMix64 finalizer over the combined words).
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z =
        base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The three independent random streams of a training run. Keeping them
/// apart lets a DropIn run and a standard run share the same reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub weights: u64,
    pub shuffle: u64,
    pub mask: u64,
}

impl SeedSet {
    pub fn from_base(base: u64) -> Self {
        SeedSet {
            weights: derive_seed(base, 1, 0),
            shuffle: derive_seed(base, 2, 0),
            mask: derive_seed(base, 3, 0),
        }
    }
}

impl Default for SeedSet {
    fn default() -> Self {
        SeedSet {
            weights: 1,
            shuffle: 2,
            mask: 3,
        }
    }
}
