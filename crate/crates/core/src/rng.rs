//! Seed derivation and per-subject substreams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, stream id)`, so results never depend on the order in which
//! subjects or replicates are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of coordinates.
pub fn derive_seed(base: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(base), |acc, &c| mix64(acc ^ mix64(c)))
}

/// Independent stream for one subject of one dataset.
pub fn subject_stream(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64);
    rng
}

/// 64-bit FNV-1a, used for dataset provenance hashes.
pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| subject_stream(7, 0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = subject_stream(7, 0).random();
        let y: u64 = subject_stream(7, 1).random();
        assert_ne!(x, y);
    }

    #[test]
    fn derived_seeds_depend_on_every_coordinate() {
        let s = derive_seed(1, &[2, 3]);
        assert_ne!(s, derive_seed(1, &[3, 2]));
        assert_ne!(s, derive_seed(2, &[2, 3]));
        assert_eq!(s, derive_seed(1, &[2, 3]));
    }
}
