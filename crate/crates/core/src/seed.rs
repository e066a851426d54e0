//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is a ChaCha8 stream keyed by a derived
//! 64-bit seed, so results never depend on scheduling or iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent seed for a named pipeline stage.
pub fn derive(seed: u64, tag: &str) -> u64 {
    tag.bytes().fold(mix64(seed), |acc, b| mix64(acc ^ b as u64))
}

/// Stream `index` of the generator keyed by `seed`. Streams are independent
/// and can be drawn in any order.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
