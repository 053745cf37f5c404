//! Reproducible random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), keyed by
//! a 64-bit seed expanded with `SeedableRng::seed_from_u64` and separated into
//! independent streams with `ChaCha8Rng::set_stream`. ChaCha is a counter-based
//! generator with a fixed specification, so identical seeds give identical
//! output on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream carrying the pre-change observations of a path.
pub const PRE_CHANGE_STREAM: u64 = 0;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of trial `index` from a master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index))
}

/// A generator on `stream` of the key derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
