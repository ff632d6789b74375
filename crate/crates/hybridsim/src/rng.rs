//! Deterministic seed derivation.
//!
//! One master seed fans out into per-trial, per-purpose ChaCha streams, so
//! adding draws in one phase of a simulation never perturbs another, and
//! trials can run on any number of threads with identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Discriminants are part of the
/// reproducibility contract; do not reorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Channel = 0,
    DownlinkNoise = 1,
    UplinkNoise = 2,
    InitVector = 3,
    MsDownlinkNoise = 4,
    MsUplinkNoise = 5,
    MsInitVector = 6,
    MtqrDownlinkNoise = 7,
    MtqrUplinkNoise = 8,
    MtqrInit = 9,
    Generic = 10,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a master seed with an arbitrary tag path into a fresh sub-seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x5bd1e995_9e3779b9);
    for &t in tags {
        state = splitmix64(state ^ t.wrapping_mul(0xff51afd7ed558ccd));
    }
    state
}

/// Stream for `(master, trial, snr point, purpose)`.
pub fn stream(master: u64, trial: u64, snr_index: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[trial, snr_index, purpose as u64]))
}

/// Stream that only depends on `(master, trial)` — the channel draw, shared
/// across SNR points and schemes.
pub fn channel_stream(master: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[trial, StreamPurpose::Channel as u64]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable_and_purpose_separated() {
        let a = derive_seed(42, &[1, 0, 3]);
        let b = derive_seed(42, &[1, 0, 3]);
        assert_eq!(a, b);
        assert_ne!(derive_seed(42, &[1, 0, 1]), derive_seed(42, &[1, 0, 2]));
        assert_ne!(derive_seed(42, &[1, 0, 1]), derive_seed(43, &[1, 0, 1]));
    }

    #[test]
    fn streams_reproduce() {
        let mut r1 = stream(7, 3, 2, StreamPurpose::DownlinkNoise);
        let mut r2 = stream(7, 3, 2, StreamPurpose::DownlinkNoise);
        for _ in 0..16 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }
}
