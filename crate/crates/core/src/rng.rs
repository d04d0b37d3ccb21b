//! Seeded randomness shared by split generation and weight initialisation.
//!
//! The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`.
//! Shuffles are Fisher–Yates from the back, drawing the swap index for
//! position `i` as the high 64 bits of `next_u64() * (i + 1)`. The algorithm
//! identifier below is written into every emitted report.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const PRNG_ALGORITHM: &str = "chacha8(seed_from_u64)+fisher-yates(mul-hi-u64)";

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a named purpose from a run seed.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    // FNV-1a over the purpose tag, folded into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Uniform integer in `0..bound` (`bound > 0`).
pub fn below(rng: &mut impl RngCore, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Uniform `f64` in `[0, 1)` with 53 random bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}
