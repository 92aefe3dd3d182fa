//! Counter-style seed derivation.
//!
//! Every random stream is identified by a master seed and a short label path
//! (replica id, stream tag, particle slot, ...). Seeds are derived by hashing
//! that path, so streams never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Stream tags used as the second label of a derived seed.
pub mod stream {
    pub const FAST_NOISE: u64 = 0x01;
    pub const SLOW_NOISE: u64 = 0x02;
    pub const OBSERVATION: u64 = 0x03;
    pub const PARTICLES: u64 = 0x04;
    pub const RESAMPLING: u64 = 0x05;
    pub const HISTORY: u64 = 0x06;
    pub const PROBES: u64 = 0x07;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed and a label path into a stream seed.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |h, &l| splitmix64(h ^ splitmix64(l.wrapping_add(0x6C66_6D73))))
}

/// Generator for the stream at `labels` under `master`.
pub fn rng_for(master: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = rng_for(7, &[1, 2]).random();
        let b: u64 = rng_for(7, &[1, 2]).random();
        let c: u64 = rng_for(7, &[2, 1]).random();
        let d: u64 = rng_for(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn empty_label_path_differs_from_master() {
        assert_ne!(derive_seed(3, &[]), 3);
        assert_ne!(derive_seed(3, &[]), derive_seed(3, &[0]));
    }
}
