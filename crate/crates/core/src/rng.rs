//! Deterministic stream derivation for Monte Carlo sampling.
//!
//! Every trajectory owns an independent ChaCha8 stream whose 64-bit seed is
//! derived from `(master_seed, stream, substream)` with the splitmix64
//! finalizer. The mix is stable across platforms and releases; changing it
//! invalidates recorded outputs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer (Steele, Lea, Flood 2014). Bijective on u64.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive the seed for substream `sample` of stream `stream` under `master`.
///
/// Layout: `sm64(sm64(sm64(master) ^ stream) ^ sample)`. Documented so that
/// exact reruns can be reproduced outside this crate.
#[inline]
pub fn derive_seed(master: u64, stream: u64, sample: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ sample)
}

/// Construct the RNG for a derived seed.
pub fn stream_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derive_seed_is_stable() {
        // Frozen values: the derivation is part of the reproducibility contract.
        assert_eq!(derive_seed(0, 0, 0), splitmix64(splitmix64(splitmix64(0))));
        let a = derive_seed(7919, 2, 13);
        let b = derive_seed(7919, 2, 13);
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_coordinates_give_distinct_streams() {
        let mut seen = std::collections::HashSet::new();
        for stream in 0..8u64 {
            for sample in 0..64u64 {
                assert!(seen.insert(derive_seed(42, stream, sample)));
            }
        }
    }

    #[test]
    fn rng_is_deterministic() {
        let mut r1 = stream_rng(derive_seed(1, 2, 3));
        let mut r2 = stream_rng(derive_seed(1, 2, 3));
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
