//! Seeded randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 stream seeded from a
//! `u64`. Integers in a range use the widening-multiply reduction and
//! shuffles are Fisher-Yates from the back, so a seed yields the same values
//! on every platform and with every toolchain.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[-bound, bound)`.
pub fn symmetric(rng: &mut impl RngCore, bound: f64) -> f64 {
    (2.0 * unit(rng) - 1.0) * bound
}

/// Uniform integer in `0..n`. `n` must be positive.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

pub fn choose<'a, T>(rng: &mut impl RngCore, items: &'a [T]) -> &'a T {
    &items[below(rng, items.len())]
}
