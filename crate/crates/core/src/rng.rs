//! Seeded, platform-independent randomness.
//!
//! Everything random in this crate flows through `ChaCha8` with explicit
//! seeding, and distributions are mapped from raw 64-bit draws by hand
//! (inverse CDF for uniforms, widening multiply for bounded integers), so
//! the same seed yields bit-identical streams on every platform and build.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw from `[lo, hi)` built from the top 53 bits of one
    /// 64-bit word.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + u * (hi - lo)
    }

    /// Uniform integer from `[lo, hi]` inclusive via widening multiply.
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        lo + (((self.0.next_u64() as u128) * (span as u128)) >> 64) as u64
    }

    /// `k` distinct indices from `0..n`, drawn by a partial Fisher-Yates
    /// shuffle. Order of the result is the draw order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = self.uniform_u64(i as u64, n as u64 - 1) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
