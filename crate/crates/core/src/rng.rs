//! Deterministic random substreams keyed by a seed and a string tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent generator for `(seed, tag)`.
pub fn substream(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
    s = (s ^ (s >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    ChaCha8Rng::seed_from_u64(s ^ fnv1a(tag.as_bytes()))
}
