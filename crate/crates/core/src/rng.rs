//! Seeded, splittable randomness.
//!
//! Every random draw in the crate goes through [`SeededRng`]. A stream is
//! identified by `(seed, stream)`; [`SeededRng::substream`] derives child
//! streams by hashing the parent identity together with a child index, then
//! selecting a distinct ChaCha stream. Children of the same parent never share
//! a `(key, stream)` pair, so trials run in parallel see independent sequences.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    draws: u64,
    inner: ChaCha8Rng,
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            draws: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 64-bit words consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Child stream `index`. Depends only on this generator's identity,
    /// not on how many values it has produced.
    pub fn substream(&self, index: u64) -> Self {
        let child_stream = mix(self.stream ^ mix(index.wrapping_add(1)));
        Self::with_stream(self.seed, child_stream)
    }

    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        self.inner.sample(StandardNormal)
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| scale * self.normal())
    }

    pub fn normal_vector(&mut self, len: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(len, |_, _| scale * self.normal())
    }

    /// Uniform draw from the Frobenius ball of the given radius.
    pub fn uniform_ball(&mut self, rows: usize, cols: usize, radius: f64) -> DMatrix<f64> {
        let mut dir = self.normal_matrix(rows, cols, 1.0);
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        let dim = (rows * cols) as f64;
        let rad = radius * self.uniform().powf(1.0 / dim);
        dir * rad
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }
}
