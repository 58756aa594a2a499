//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by
//! `ChaCha8Rng::seed_from_u64(seed)`, with one independent stream per unit of
//! work (a sample index in random search, an experiment index in the
//! simulator). Work items can therefore run on any thread, in any order, and
//! produce the same values as a serial run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for work item `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an unrelated seed for a named sub-run (e.g. a held-out panel).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
