//! Named, splittable random streams.
//!
//! Every piece of randomness in a run is drawn from a stream addressed by
//! `(root seed, label, index)`. Streams are independent ChaCha8 streams of the
//! same keyed generator, so parallel or reordered work that uses distinct
//! labels reproduces bit-identically regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable across platforms and Rust versions, unlike
/// `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the RNG stream named `(label, index)` from a run-level root seed.
pub fn stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut buf = Vec::with_capacity(label.len() + 9);
    buf.extend_from_slice(label.as_bytes());
    buf.push(0);
    buf.extend_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(&buf));
    rng
}
