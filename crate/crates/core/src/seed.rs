//! Seed derivation. Every random draw in the pipeline is keyed by an explicit
//! 64-bit seed so that per-frame work can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of integer keys.
pub fn derive(parent: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(parent), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Stream labels for the independent draws made for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Symbols = 1,
    Channel = 2,
    Noise = 3,
}

/// Seed of one stream inside a frame.
pub fn stream_seed(frame_seed: u64, stream: Stream) -> u64 {
    derive(frame_seed, &[stream as u64])
}

/// The generator used everywhere: ChaCha8 is portable and reproducible across
/// platforms and crate versions.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
