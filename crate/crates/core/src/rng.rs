//! Seed derivation for independent random streams.
//!
//! All randomness is ChaCha8, keyed by a 64-bit seed and a 64-bit stream
//! number, so a run is bit-reproducible regardless of how trials are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags that keep the per-trial streams disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Actuation = 1,
    Sensing = 2,
    Noise = 3,
    Search = 4,
}

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `stream` of trial `trial` under master seed `seed`.
pub fn derive_seed(seed: u64, trial: u64, stream: Stream) -> u64 {
    mix(mix(seed ^ mix(trial)) ^ (stream as u64))
}

/// Generator keyed by `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
