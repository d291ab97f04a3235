use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;
use crate::error::{Error, Result};

/// Deterministic random source.
///
/// Backed by ChaCha8 seeded through `seed_from_u64`, which is specified to be
/// portable: equal seeds give equal streams on every platform. `split` derives
/// an independent child generator by drawing a fresh 64-bit seed from the
/// parent, so sub-components can be seeded without sharing state.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

/// Sampling law for [`Rng::fill`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    /// `lo + (hi - lo) · u` with `u` uniform on `[0, 1)`.
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// `mean + std · z` with `z` standard normal (ziggurat).
    Normal {
        mean: f64,
        std: f64,
    },
    Zeros,
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        Self::Normal { mean, std }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && hi > lo) => Err(Error::Parameter(
                format!("uniform bounds need lo < hi, got [{lo}, {hi})"),
            )),
            Self::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && std >= 0.0) => {
                Err(Error::Parameter(format!(
                    "normal needs finite mean and std >= 0, got mean={mean} std={std}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl Rng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child generator; advances the parent by one draw.
    pub fn split(&mut self) -> Rng {
        Rng::seed_from_u64(self.inner.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn sample(&mut self, dist: Distribution) -> f64 {
        match dist {
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * self.next_f64(),
            Distribution::Normal { mean, std } => {
                let z: f64 = self.inner.sample(StandardNormal);
                mean + std * z
            }
            Distribution::Zeros => 0.0,
        }
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn fill(&mut self, rows: usize, cols: usize, dist: Distribution) -> Result<Matrix> {
        dist.validate()?;
        let data = (0..rows * cols).map(|_| self.sample(dist)).collect();
        Matrix::from_vec(rows, cols, data)
    }
}
