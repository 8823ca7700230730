//! Counter-based seeding: every random stream is addressed by
//! `(seed, key, counter)` so that masks and initial weights can be
//! regenerated exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the bytes of `s`; stable across platforms and releases.
pub fn name_key(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, key: u64, counter: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ key) ^ counter)
}

pub fn stream_rng(seed: u64, key: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, key, counter))
}
