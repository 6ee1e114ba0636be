//! Seed derivation for replicated experiments.
//!
//! Replicate `i` of an experiment with master seed `s` uses the `(i+1)`-th
//! output of a SplitMix64 generator started at `s`, and seeds a ChaCha8
//! stream with it. The derivation depends only on `(s, i)`, so results do
//! not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Human-readable definition written into report headers.
pub const SEED_DERIVATION: &str =
    "seed_i = splitmix64_mix(master + (i + 1) * 0x9e3779b97f4a7c15); rng_i = ChaCha8(seed_i)";

pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64_mix(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_stream(master: u64, index: u64) -> StreamRng {
    stream(derive_seed(master, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0 (reference implementation).
        assert_eq!(derive_seed(0, 0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(derive_seed(0, 1), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| replicate_stream(7, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| replicate_stream(7, 3).random()).collect();
        assert_eq!(a, b);
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }
}
