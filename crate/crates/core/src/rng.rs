//! Seeded random streams.
//!
//! A stream wraps a ChaCha8 generator. Child streams are derived from the
//! parent seed and a child index through two rounds of SplitMix64, so the
//! draws of one child never depend on how many draws were taken from another.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random source identified by a 64-bit seed.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream number `index`, a pure function of `(seed, index)`.
    pub fn child(&self, index: u64) -> RngStream {
        RngStream::new(splitmix64(self.seed ^ splitmix64(index.wrapping_add(GOLDEN))))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Vector of i.i.d. `N(0, variance)` entries.
    pub fn gaussian_vector(&mut self, len: usize, variance: f64) -> DVector<f64> {
        let sd = variance.sqrt();
        DVector::from_fn(len, |_, _| sd * self.standard_normal())
    }

    /// Matrix of i.i.d. `N(0, 1)` entries, filled column by column.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.standard_normal())
    }

    /// Uniformly distributed unit vector.
    pub fn unit_vector(&mut self, len: usize) -> DVector<f64> {
        loop {
            let v = self.gaussian_vector(len, 1.0);
            let norm = v.norm();
            if norm > 1e-12 {
                return v / norm;
            }
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}
