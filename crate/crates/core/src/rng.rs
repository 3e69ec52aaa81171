//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator. A child stream is addressed by
//! `(seed, domain, index)`: the seed and domain are mixed through SplitMix64
//! into the generator key and the index selects the ChaCha stream. Trials
//! use their canonical cell key as index, so adding factor levels to a
//! config never shifts the draws of trials that already existed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep unrelated consumers of one seed apart.
pub mod domain {
    pub const DRIVER_SESSION: u64 = 0x5345_5353;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const CELL: u64 = 0x4345_4c4c;
    pub const ORDER: u64 = 0x4f52_4452;
    pub const DECISION: u64 = 0x4445_4349;
    pub const DECISION_TIME: u64 = 0x5449_4d45;
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes a sequence of words into one 64-bit value.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c909, |acc, w| splitmix64(acc ^ splitmix64(*w)))
}

pub fn child(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, domain]));
    rng.set_stream(index);
    rng
}
