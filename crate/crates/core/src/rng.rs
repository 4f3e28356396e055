//! Seeded, platform-stable randomness.
//!
//! Every random draw in the crate goes through [`RngState`], a thin wrapper
//! over ChaCha8 (a counter-based stream cipher generator). A generator is
//! identified by `(seed, stream)`; its position is a 128-bit word counter, so
//! the complete state can be written to a checkpoint and restored exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;

/// Stream ids used by the library. Keeping them in one place avoids two
/// subsystems silently sharing a stream.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
    pub const OOK_SAMPLE: u64 = 4;
    /// Epoch `e` shuffles with stream `SHUFFLE_BASE + e`.
    pub const SHUFFLE_BASE: u64 = 1 << 32;
}

#[derive(Clone, Debug)]
pub struct RngState {
    inner: ChaCha8Rng,
}

/// Serializable position of an [`RngState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::for_stream(seed, 0)
    }

    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState { inner }
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot {
            key: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn restore(snap: &RngSnapshot) -> Self {
        let mut inner = ChaCha8Rng::from_seed(snap.key);
        inner.set_stream(snap.stream);
        inner.set_word_pos(snap.word_pos);
        RngState { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// A `rows x cols` matrix of independent `N(mean, stddev²)` draws.
    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, mean: f64, stddev: f64) -> Matrix {
        assert!(stddev >= 0.0, "negative standard deviation");
        let data = (0..rows * cols)
            .map(|_| mean + stddev * self.gaussian())
            .collect();
        Matrix::from_vec(rows, cols, data).expect("length matches by construction")
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, excluding `skip`, in draw order.
    pub fn sample_excluding(&mut self, n: usize, k: usize, skip: usize) -> Vec<usize> {
        assert!(skip < n && k < n, "cannot draw {k} of {n} with one excluded");
        // Partial Fisher-Yates over the n-1 candidates.
        let mut pool: Vec<usize> = (0..n).filter(|&i| i != skip).collect();
        for i in 0..k {
            let j = i + self.below(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
