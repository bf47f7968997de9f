//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`SimRng`], a ChaCha8 stream
//! seeded from a `u64`. Normal variates use the ziggurat sampler of
//! `rand_distr::StandardNormal`, so a seed reproduces the same stream on any
//! platform for a given build.
//!
//! Parallel or per-task streams are never split off a shared generator.
//! Instead a child seed is derived from the parent seed and a path of
//! integer labels (see [`derive_seed`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matrix::{Matrix, Vector};

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the task identified by `labels` under `seed`.
///
/// `derive_seed(s, &[a, b]) == derive_seed(derive_seed(s, &[a]), &[b])`.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(seed, |acc, &label| mix64(acc ^ mix64(label)))
}

/// 64-bit FNV-1a, used to turn detector names into seed labels.
pub fn label_of(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic random stream.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn from_seed(seed: u64) -> Self {
        SimRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for the task at `labels` below `seed`; see [`derive_seed`].
    pub fn derived(seed: u64, labels: &[u64]) -> Self {
        Self::from_seed(derive_seed(seed, labels))
    }

    /// Standard normal draw.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Equiprobable ±1.
    #[inline]
    pub fn bpsk(&mut self) -> f64 {
        if self.inner.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// `n` i.i.d. standard normal draws.
    pub fn randn(&mut self, n: usize) -> Vector {
        (0..n).map(|_| self.normal()).collect()
    }

    /// `rows × cols` matrix of i.i.d. standard normal draws, row-major order.
    pub fn randn_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }
}
