//! Seed derivation for reproducible runs.
//!
//! Every stochastic component (parameter init, shuffling, dropout, cycle
//! synthesis) draws from a `ChaCha8Rng` seeded by a value derived from the
//! master seed, a purpose tag and an index. Derivation is a fixed function of
//! its inputs, so sub-seeds are stable across runs, platforms and iteration
//! order — parallel workers can derive their own seeds without sharing an RNG.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used instead of `DefaultHasher` because the std hasher is not
/// guaranteed stable across Rust releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Seeded RNG for a derived purpose.
pub fn rng_for(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
