//! Seed derivation.
//!
//! Every random draw in the simulator comes from a ChaCha stream keyed by a
//! tuple of integers (base seed, stream tag, indices). Streams never depend on
//! evaluation order, so sequential and parallel execution agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep the tissue, acquisition and test streams disjoint.
pub mod stream {
    pub const TISSUE: u64 = 0x7153_5545;
    pub const ACQUISITION: u64 = 0xAC01_5171;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with any number of indices into a single 64-bit key.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
