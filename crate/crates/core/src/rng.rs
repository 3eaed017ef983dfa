//! Seeded, platform-independent random numbers.
//!
//! All randomness goes through ChaCha8 seeded from a `u64`. Floats are built
//! from the top 24 bits of `next_u32`, so a given seed produces the same
//! values on every target.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Number of mel bins in an acoustic feature frame.
pub const FEATURE_BINS: usize = 80;

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 24 bits of resolution.
    pub fn unit_f32(&mut self) -> f32 {
        (self.inner.next_u32() >> 8) as f32 * (1.0 / 16_777_216.0)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn unit_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn uniform(&mut self, low: f32, high: f32) -> f32 {
        low + (high - low) * self.unit_f32()
    }

    /// Uniform integer in `[low, high)`.
    pub fn range(&mut self, low: usize, high: usize) -> usize {
        assert!(high > low, "empty range");
        let span = (high - low) as u64;
        low + (self.inner.next_u64() % span) as usize
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, low: f32, high: f32) -> Matrix {
        let data: Vec<f32> = (0..rows * cols).map(|_| self.uniform(low, high)).collect();
        Matrix::new(rows, cols, data).expect("length matches shape")
    }
}

/// Reproducible synthetic 80-bin feature frames.
///
/// Values are uniform in `[-4, 4)`, a range comparable to normalized
/// log-mel energies.
pub fn synth_features(seed: u64, num_frames: usize) -> Result<Matrix> {
    if num_frames == 0 {
        return Err(Error::EmptyInput("synth_features"));
    }
    Ok(SeededRng::new(seed).uniform_matrix(num_frames, FEATURE_BINS, -4.0, 4.0))
}
