//! Seeded, splittable randomness.
//!
//! Every source of randomness in a run derives from one global seed through
//! named sub-streams, so individual components can be re-seeded or perturbed
//! independently without touching the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent RNG stream from `(seed, name)`.
///
/// The name is hashed (FNV-1a) into the ChaCha stream id, so distinct names
/// yield statistically independent streams under the same seed.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// A numbered worker sub-stream of a named stream.
pub fn worker_stream(seed: u64, name: &str, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()) ^ worker.wrapping_mul(0x9e3779b97f4a7c15));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
