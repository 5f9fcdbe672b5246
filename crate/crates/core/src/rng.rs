//! Deterministic random source.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded from a 64-bit
//! value via `SeedableRng::seed_from_u64`. Its output stream is fixed by the
//! ChaCha specification and does not depend on the platform. On top of the raw
//! `u64` stream:
//!
//! - uniforms in `[0, 1)` take the top 53 bits of one `u64`;
//! - standard normals use the Box–Muller transform over two uniforms, emitting
//!   both outputs of each pair (the cosine one first);
//! - bounded integers use rejection sampling on a `u64`.
//!
//! Independent child streams for parallel work come from [`RngState::with_stream`].

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Same seed, separate ChaCha stream; streams never overlap.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState {
            seed,
            inner,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        mean + stddev * self.standard_normal()
    }

    /// Matrix of i.i.d. `N(mean, stddev²)` draws, filled row by row.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, mean: f64, stddev: f64) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.normal(mean, stddev)).collect();
        Matrix::from_vec(rows, cols, data).expect("length matches by construction")
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, uniformly, in selection order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// `rows × cols` Gaussian sample. `stddev = 0` yields the constant `mean`.
pub fn sample_normal(
    rng: &mut RngState,
    rows: usize,
    cols: usize,
    mean: f64,
    stddev: f64,
) -> Result<Matrix> {
    if !(stddev >= 0.0) || !stddev.is_finite() || !mean.is_finite() {
        return Err(Error::Parameter(alloc::format!(
            "normal sample needs finite mean and stddev >= 0, got mean={mean}, stddev={stddev}"
        )));
    }
    if stddev == 0.0 {
        return Ok(Matrix::filled(rows, cols, mean));
    }
    Ok(rng.normal_matrix(rows, cols, mean, stddev))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_gaussian() {
        let mut rng = RngState::new(1);
        let m = sample_normal(&mut rng, 3, 4, 0.0, 0.0).unwrap();
        assert_eq!(m, Matrix::zeros(3, 4));
        assert!(sample_normal(&mut rng, 1, 1, 0.0, -1.0).is_err());
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngState::new(42);
        let m = sample_normal(&mut rng, 1000, 100, 0.0, 1.0).unwrap();
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = sample_normal(&mut RngState::new(9), 8, 8, 1.0, 2.0).unwrap();
        let b = sample_normal(&mut RngState::new(9), 8, 8, 1.0, 2.0).unwrap();
        assert_eq!(a, b);
        let c = sample_normal(&mut RngState::new(10), 8, 8, 1.0, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn long_streams_are_reproducible() {
        let mut a = RngState::new(123);
        let mut b = RngState::new(123);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngState::with_stream(5, 0);
        let mut b = RngState::with_stream(5, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn choose_distinct_is_distinct() {
        let mut rng = RngState::new(0);
        let mut picks = rng.choose_distinct(100, 50);
        assert_eq!(picks.len(), 50);
        picks.sort_unstable();
        picks.dedup();
        assert_eq!(picks.len(), 50);
        assert!(picks.iter().all(|&p| p < 100));
    }

    #[test]
    fn uniform_range() {
        let mut rng = RngState::new(77);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
