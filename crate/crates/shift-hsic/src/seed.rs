//! Deterministic seed derivation.
//!
//! Every source of randomness in this crate is a ChaCha8 stream whose seed
//! is derived from a master seed and a path of integers (grid index,
//! repetition index, resample index, ...). The derivation is a fixed
//! splitmix64 chain, so results are reproducible across platforms and
//! across serial/parallel execution.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a substream seed from `master` and a path of indices.
///
/// `derive_seed(s, &[a, b])` never collides with `derive_seed(s, &[a'])`
/// in practice because every path element passes through a full
/// splitmix64 round.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// A seeded generator for the given substream path.
pub fn substream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
