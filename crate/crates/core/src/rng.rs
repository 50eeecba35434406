//! Counter-based seed splitting.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(master seed, run index, component)`. Streams never share state, so
//! adding a component or changing the work done in one run leaves every
//! other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams used inside a single simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Factors = 1,
    Loadings = 2,
    Idiosyncratic = 3,
    Errors = 4,
    CrossValidation = 5,
    EffectiveNoise = 6,
    Diagnostics = 7,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Generator for one named component of a seeded computation.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
