//! Seed derivation.
//!
//! Every random stream in the pipeline is a ChaCha8 generator whose seed is
//! derived from one top-level `u64` seed. A derived seed is
//! `splitmix64(base ^ splitmix64(fnv1a(tag) ^ index))`, so streams for
//! different purposes (fold split, weight init, batch shuffling) and different
//! folds or grid configurations never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives an independent seed for the stream named `tag`, instance `index`.
pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(tag) ^ index))
}
