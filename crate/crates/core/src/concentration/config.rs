use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::orthant::{orthant_scaling, OrthantFit};
use super::sampler::{SamplerMode, SparsePairSampler};
use super::tail::{empirical_bilinear_tail, fit_hw_constant, radius_scaling_fit, FormMatrix, RadiusFit, TailEstimate};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    #[default]
    Identity,
    /// Symmetric with `N(0, 1 / n)` entries, drawn from the config seed.
    Gaussian,
}

fn default_coupling() -> f64 {
    1.0
}

fn default_level() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    pub pi_grid: Vec<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
}

/// Input of the bilinear tail experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwTestConfig {
    pub mode: SamplerMode,
    pub n: usize,
    pub pi: f64,
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    pub trials: usize,
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub matrix: MatrixKind,
    pub seed: u64,
    /// Constant for the `bound` column; fitted from the tail when absent.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub radius: Option<RadiusConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwTestReport {
    pub tail: TailEstimate,
    pub c: Option<f64>,
    pub subgaussian_norm: f64,
    pub frobenius_norm: f64,
    pub spectral_norm: f64,
    pub radius: Option<RadiusFit>,
}

impl HwTestConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        SparsePairSampler::new(self.n, self.pi, self.mode, self.coupling)?;
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidArgument("epsilon must be a nonempty list of finite values >= 0".into()));
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidArgument(format!("c = {c} must be positive")));
            }
        }
        if let Some(r) = &self.radius {
            if !(r.level > 0.0 && r.level < 1.0) {
                return Err(Error::InvalidArgument(format!("level = {} outside (0, 1)", r.level)));
            }
            if r.pi_grid.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
                return Err(Error::InvalidArgument("pi_grid values must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn form_matrix(&self) -> FormMatrix {
        match self.matrix {
            MatrixKind::Identity => FormMatrix::Identity,
            MatrixKind::Gaussian => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(u64::MAX);
                let scale = (self.n as f64).sqrt().recip();
                let mut m = DMatrix::zeros(self.n, self.n);
                for j in 0..self.n {
                    for i in 0..=j {
                        let v = scale * rng.sample::<f64, _>(StandardNormal);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                FormMatrix::Dense(m)
            }
        }
    }

    pub fn run(&self) -> Result<HwTestReport> {
        self.check()?;
        let sampler = SparsePairSampler::new(self.n, self.pi, self.mode, self.coupling)?;
        let m = self.form_matrix();
        let (k, frob, spec) = (sampler.subgaussian_norm(), m.frobenius_norm(self.n), m.spectral_norm());
        let mut tail = empirical_bilinear_tail(&sampler, &m, &self.epsilon, self.trials, self.seed)?;
        let c = self.c.or_else(|| fit_hw_constant(&tail, k, self.pi, frob, spec));
        if let Some(c) = c {
            tail = tail.with_bound(k, self.pi, frob, spec, c)?;
        }
        let radius = self
            .radius
            .as_ref()
            .map(|r| radius_scaling_fit(self.mode, self.n, &r.pi_grid, r.level, self.trials, self.coupling, self.seed))
            .transpose()?;
        Ok(HwTestReport {
            tail,
            c,
            subgaussian_norm: k,
            frobenius_norm: frob,
            spectral_norm: spec,
            radius,
        })
    }
}

/// Input of the orthant-probability experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrthantConfig {
    pub rho: f64,
    pub k: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl OrthantConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument(format!("rho = {} outside (0, 1)", self.rho)));
        }
        if self.k.iter().any(|&k| k == 0) || self.trials == 0 {
            return Err(Error::InvalidArgument("k values and trials must be positive".into()));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<OrthantFit> {
        self.check()?;
        orthant_scaling(self.rho, &self.k, self.trials, self.seed)
    }
}
