//! Deterministic seeding.
//!
//! Every random stream in a run is a ChaCha8 generator whose 64-bit seed is
//! derived from a parent seed and a textual label:
//!
//! ```text
//! child_seed(seed, label) = splitmix64(seed XOR fnv1a64(label))
//! ```
//!
//! A run seeds one stream per consumer (`"engine/draws"`, `"adapt"`,
//! `"population"`, `"solver/<id>"`, ...), so adding draws to one consumer
//! never shifts another consumer's sequence. No ambient entropy is used
//! anywhere in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn child_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(label.as_bytes()))
}

/// A generator for the stream `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(child_seed(seed, label))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = stream(7, "engine/draws").random_iter().take(4).collect();
        let b: Vec<u64> = stream(7, "engine/draws").random_iter().take(4).collect();
        let c: Vec<u64> = stream(7, "adapt").random_iter().take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fnv_reference_value() {
        // Published FNV-1a test vector.
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
