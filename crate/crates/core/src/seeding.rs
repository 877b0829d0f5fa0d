//! Deterministic RNG streams.
//!
//! A run owns one master seed; each consumer (environment resets, CEM
//! sampling, minibatch draws, noise, evaluation) reads its own ChaCha stream
//! so changing how often one consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 0;
pub const STREAM_ENV: u64 = 1;
pub const STREAM_EXPLORE: u64 = 2;
pub const STREAM_CEM: u64 = 3;
pub const STREAM_MINIBATCH: u64 = 4;
pub const STREAM_SMOOTHING: u64 = 5;
pub const STREAM_EVAL: u64 = 6;
pub const STREAM_EVAL_CEM: u64 = 7;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a path of indices into a child seed.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[test]
    fn streams_are_independent_and_repeatable() {
        let a: u64 = stream_rng(5, STREAM_CEM).random();
        let b: u64 = stream_rng(5, STREAM_ENV).random();
        assert_ne!(a, b);
        assert_eq!(a, stream_rng(5, STREAM_CEM).random::<u64>());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..50 {
            for rep in 0..8 {
                assert!(seen.insert(derive_seed(7, &[cell, rep])));
            }
        }
        assert_eq!(derive_seed(7, &[3, 1]), derive_seed(7, &[3, 1]));
    }
}
