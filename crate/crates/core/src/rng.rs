//! Named seed streams.
//!
//! Every random draw in a run descends from one root seed. A stage asks for
//! `stream_seed(root, "impute", m)` and gets a seed that depends only on the
//! root, the stage label and the index, so adding or reordering stages never
//! shifts another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate. ChaCha output is stable across
/// platforms and crate versions, which the determinism contract relies on.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive the seed of stream `(stage, index)` from `root`.
pub fn stream_seed(root: u64, stage: &str, index: u64) -> u64 {
    let a = splitmix64(root ^ fnv1a(stage));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
