// SPDX-License-Identifier: Apache-2.0

//! Sub-seed derivation.
//!
//! Every random stream in the crate is seeded from the master seed through
//! [`split`], keyed by a stream tag and an index path. Streams never depend on
//! evaluation order, so per-device work can run in parallel without changing
//! any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod stream {
    pub const DEVICE: u64 = 1;
    pub const PIN_PROFILE: u64 = 2;
    pub const ACQUIRE: u64 = 3;
    pub const INJECT: u64 = 4;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `split(seed, tag, path)` folds each element through SplitMix64:
/// `h0 = mix(seed ^ mix(tag))`, `h(i+1) = mix(h(i) ^ mix(path[i] + i + 1))`.
pub fn split(seed: u64, tag: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(tag));
    for (i, &p) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(i as u64 + 1)));
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
