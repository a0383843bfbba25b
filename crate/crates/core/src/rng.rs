//! Seed derivation for reproducible, non-overlapping random streams.
//!
//! Every random stream in the simulator is a ChaCha8 generator seeded with a
//! 64-bit value derived from `(master_seed, rep, tag, index)` by chaining the
//! SplitMix64 finalizer:
//!
//! ```text
//! h = mix(master_seed ^ GOLDEN)
//! h = mix(h ^ rep)
//! h = mix(h ^ tag)
//! h = mix(h ^ index)
//! ```
//!
//! where `mix` is the SplitMix64 output function and `GOLDEN` is
//! `0x9E3779B97F4A7C15`. Any implementation reproducing this derivation and
//! ChaCha8 (as implemented by `rand_chacha` 0.3, `seed_from_u64`) reproduces
//! our traces bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags separating independent uses of the same master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    Activation = 1,
    Adversary = 2,
    Graph = 3,
    Gossip = 4,
    Data = 5,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seed_for(master_seed: u64, rep: u64, tag: StreamTag, index: u64) -> u64 {
    let mut h = mix(master_seed ^ GOLDEN);
    h = mix(h ^ rep);
    h = mix(h ^ tag as u64);
    mix(h ^ index)
}

pub fn stream(master_seed: u64, rep: u64, tag: StreamTag, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed_for(master_seed, rep, tag, index))
}

pub fn from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
