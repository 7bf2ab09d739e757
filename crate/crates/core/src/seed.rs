//! Named random sub-streams derived from a single root seed.
//!
//! Every stochastic component draws from its own stream so that changing how
//! much randomness one stage consumes never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INGEST: &str = "ingest";
pub const SAMPLE: &str = "sample";
pub const TRAIN: &str = "train";
pub const FOREST: &str = "forest";
pub const KMEANS: &str = "kmeans";
pub const SYNTH: &str = "synth";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derives the seed of stream `name` from `root`.
pub fn derive(root: u64, name: &str) -> u64 {
    splitmix64(root ^ splitmix64(fnv1a(name)))
}

/// Derives the seed of the `index`-th member of stream `name`.
pub fn derive_indexed(root: u64, name: &str, index: u64) -> u64 {
    splitmix64(derive(root, name) ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(root: u64, name: &str) -> ChaCha8Rng {
    rng(derive(root, name))
}
