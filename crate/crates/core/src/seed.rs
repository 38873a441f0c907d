//! Deterministic sub-stream seeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
///
/// Streams are keyed by name so that adding a consumer never shifts the
/// draws seen by another.
pub fn stream(seed: u64, name: &str) -> Rng {
    stream_indexed(seed, name, 0)
}

pub fn stream_indexed(seed: u64, name: &str, index: u64) -> Rng {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for b in name.bytes().chain(index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    // splitmix finaliser
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58476d1ce4e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d049bb133111eb);
    h ^= h >> 31;
    ChaCha8Rng::seed_from_u64(h)
}
