use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subgaussian norm of the standard normal under `E exp(X^2 / K^2) <= 2`.
pub const STANDARD_NORMAL_PSI2: f64 = 1.632_993_161_855_452; // sqrt(8/3)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// `Y_i = sqrt(pi) * S_i` with a sign `S_i`: bounded by 1, `E[Y_i^2] = pi`.
    SoftBounded,
    /// `Y_i = S_i * gamma_i` with `gamma_i ~ Ber(pi)` independent of `X`.
    HardMasked,
}

/// Independent coupled pairs `(X_i, Y_i)` with `X_i ~ N(0, 1)`.
///
/// The sign `S_i` equals `sign(coupling) * sign(X_i)` with probability
/// `|coupling|` and is an independent fair sign otherwise. Because the mask
/// in hard mode is independent of `X`, `X_i` given `gamma_i = 1` is still
/// standard normal and the conditional subgaussian hypothesis holds with
/// `K = sqrt(8/3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePairSampler {
    pub n: usize,
    pub pi: f64,
    pub mode: SamplerMode,
    pub coupling: f64,
}

impl SparsePairSampler {
    pub fn new(n: usize, pi: f64, mode: SamplerMode, coupling: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(Error::InvalidArgument(format!("pi = {pi} outside (0, 1]")));
        }
        if !(-1.0..=1.0).contains(&coupling) {
            return Err(Error::InvalidArgument(format!(
                "coupling = {coupling} outside [-1, 1]"
            )));
        }
        Ok(Self {
            n,
            pi,
            mode,
            coupling,
        })
    }

    pub fn subgaussian_norm(&self) -> f64 {
        STANDARD_NORMAL_PSI2
    }

    /// `E[X_i Y_i]`, identical for every coordinate.
    pub fn cross_moment(&self) -> f64 {
        let e_abs = (2.0 / std::f64::consts::PI).sqrt();
        match self.mode {
            SamplerMode::SoftBounded => self.pi.sqrt() * self.coupling * e_abs,
            SamplerMode::HardMasked => self.pi * self.coupling * e_abs,
        }
    }

    /// `E[Y_i^2]`.
    pub fn second_moment(&self) -> f64 {
        self.pi
    }

    fn sign<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let coupled = rng.random::<f64>() < self.coupling.abs();
        let s = if coupled {
            x.signum() * self.coupling.signum()
        } else if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        };
        if s == 0.0 {
            1.0
        } else {
            s
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, x: &mut [f64], y: &mut [f64]) {
        assert!(x.len() == self.n && y.len() == self.n);
        let root = self.pi.sqrt();
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            *xi = rng.sample(StandardNormal);
            let s = self.sign(*xi, rng);
            *yi = match self.mode {
                SamplerMode::SoftBounded => root * s,
                SamplerMode::HardMasked => {
                    if rng.random::<f64>() < self.pi {
                        s
                    } else {
                        0.0
                    }
                }
            };
        }
    }
}
