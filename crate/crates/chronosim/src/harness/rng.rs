//! Seeded random-number streams, split per named consumer.
//!
//! Every noise source gets its own stream derived from the master seed and a
//! stable string key (per oscillator, per link, per software stack). Adding a
//! node or reordering draws in one consumer therefore never perturbs another
//! consumer's noise, which is what makes A/B protocol comparison on one seed
//! meaningful.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a, fixed here so stream derivation never depends on the standard
/// library's unspecified hasher.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Copy, Debug)]
pub struct RngFactory {
    master_seed: u64,
}

impl RngFactory {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Deterministic sub-stream for a stable key.
    pub fn stream(&self, key: &str) -> ChaCha12Rng {
        let mixed = fnv1a64(key.as_bytes())
            ^ self
                .master_seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .rotate_left(17);
        ChaCha12Rng::seed_from_u64(mixed)
    }
}
