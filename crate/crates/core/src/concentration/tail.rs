use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{SamplerMode, SparsePairSampler};
use crate::error::{Error, Result};
use crate::stats::{least_squares, quantile, wilson_interval, Z95};

/// Right side of the bilinear Hanson-Wright bound,
/// `2 exp(-c min{eps^2 / (K^4 pi |M|_F^2), eps / (K^2 |M|_2)})`.
pub fn hw_bound(epsilon: f64, k: f64, pi: f64, frob_norm: f64, spec_norm: f64, c: f64) -> Result<f64> {
    let finite = [epsilon, k, pi, frob_norm, spec_norm, c].iter().all(|v| v.is_finite());
    if !finite
        || epsilon < 0.0
        || k <= 0.0
        || !(pi > 0.0 && pi <= 1.0)
        || frob_norm < 0.0
        || spec_norm <= 0.0
        || c <= 0.0
    {
        return Err(Error::InvalidArgument(format!(
            "hw_bound(eps={epsilon}, K={k}, pi={pi}, |M|_F={frob_norm}, |M|_2={spec_norm}, c={c})"
        )));
    }
    Ok(2.0 * (-c * hw_exponent(epsilon, k, pi, frob_norm, spec_norm)).exp())
}

/// The `min{...}` inside [`hw_bound`].
pub fn hw_exponent(epsilon: f64, k: f64, pi: f64, frob_norm: f64, spec_norm: f64) -> f64 {
    if epsilon == 0.0 {
        return 0.0;
    }
    let k2 = k * k;
    let gaussian = if frob_norm == 0.0 {
        f64::INFINITY
    } else {
        epsilon * epsilon / (k2 * k2 * pi * frob_norm * frob_norm)
    };
    gaussian.min(epsilon / (k2 * spec_norm))
}

/// Matrix of the bilinear form.
#[derive(Clone, Debug, PartialEq)]
pub enum FormMatrix {
    Identity,
    Dense(DMatrix<f64>),
}

impl FormMatrix {
    pub fn frobenius_norm(&self, n: usize) -> f64 {
        match self {
            FormMatrix::Identity => (n as f64).sqrt(),
            FormMatrix::Dense(m) => m.norm(),
        }
    }

    pub fn spectral_norm(&self) -> f64 {
        match self {
            FormMatrix::Identity => 1.0,
            FormMatrix::Dense(m) => m.clone().singular_values().max(),
        }
    }

    fn trace(&self, n: usize) -> f64 {
        match self {
            FormMatrix::Identity => n as f64,
            FormMatrix::Dense(m) => m.trace(),
        }
    }

    fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            FormMatrix::Identity => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            FormMatrix::Dense(m) => {
                let n = x.len();
                let mut total = 0.0;
                for (j, &yj) in y.iter().enumerate() {
                    if yj != 0.0 {
                        let col = &m.as_slice()[j * n..(j + 1) * n];
                        total += yj * col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                total
            }
        }
    }
}

/// Analytic mean `tr(M E[Y X^T])` of the form under `sampler`.
pub fn analytic_mean(sampler: &SparsePairSampler, m: &FormMatrix) -> f64 {
    m.trace(sampler.n) * sampler.cross_moment()
}

/// Centered draws `x^T M y - E[x^T M y]`, one per trial. Trial `i` uses its
/// own ChaCha stream, so the output does not depend on the thread count.
pub fn centered_forms(
    sampler: &SparsePairSampler,
    m: &FormMatrix,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if let FormMatrix::Dense(mat) = m {
        if mat.nrows() != sampler.n || mat.ncols() != sampler.n {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, sampler has n = {}",
                mat.nrows(),
                mat.ncols(),
                sampler.n
            )));
        }
    }
    let mean = analytic_mean(sampler, m);
    Ok((0..trials)
        .into_par_iter()
        .map_init(
            || (vec![0.0; sampler.n], vec![0.0; sampler.n]),
            |(x, y), i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                sampler.sample(&mut rng, x, y);
                m.form(x, y) - mean
            },
        )
        .collect())
}

/// Exceedance frequencies of a centered bilinear form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub epsilon: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub wilson_lo: Vec<f64>,
    pub wilson_hi: Vec<f64>,
    /// Hanson-Wright bound at each epsilon, once a constant is chosen.
    pub bound: Option<Vec<f64>>,
    pub trials: usize,
    /// Set when the pooled-adjacent-violators pass changed any `p_hat`.
    pub isotonic_corrected: bool,
}

pub const MIN_TAIL_TRIALS: usize = 1000;

impl TailEstimate {
    pub fn from_samples(samples: &[f64], epsilon: &[f64]) -> Self {
        let mut epsilon = epsilon.to_vec();
        epsilon.sort_by(f64::total_cmp);
        let trials = samples.len();
        let counts: Vec<u64> = epsilon
            .iter()
            .map(|&e| samples.iter().filter(|v| v.abs() > e).count() as u64)
            .collect();
        let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
        let p_hat = nonincreasing(&raw);
        let isotonic_corrected = p_hat != raw;
        let (wilson_lo, wilson_hi) = counts
            .iter()
            .map(|&c| wilson_interval(c, trials as u64, Z95))
            .unzip();
        Self {
            epsilon,
            p_hat,
            wilson_lo,
            wilson_hi,
            bound: None,
            trials,
            isotonic_corrected,
        }
    }

    pub fn with_bound(mut self, k: f64, pi: f64, frob: f64, spec: f64, c: f64) -> Result<Self> {
        self.bound = Some(
            self.epsilon
                .iter()
                .map(|&e| hw_bound(e, k, pi, frob, spec, c))
                .collect::<Result<_>>()?,
        );
        Ok(self)
    }

    /// CSV with columns `epsilon,p_hat,wilson_lo,wilson_hi,bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epsilon", "p_hat", "wilson_lo", "wilson_hi", "bound"])?;
        for i in 0..self.epsilon.len() {
            let bound = self
                .bound
                .as_ref()
                .map_or(String::new(), |b| b[i].to_string());
            w.write_record([
                self.epsilon[i].to_string(),
                self.p_hat[i].to_string(),
                self.wilson_lo[i].to_string(),
                self.wilson_hi[i].to_string(),
                bound,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pool-adjacent-violators projection onto nonincreasing sequences.
fn nonincreasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("two blocks");
            *last = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, c)| std::iter::repeat_n(v, c))
        .collect()
}

pub fn empirical_bilinear_tail(
    sampler: &SparsePairSampler,
    m: &FormMatrix,
    epsilon: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TailEstimate> {
    if trials < MIN_TAIL_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TAIL_TRIALS} trials, got {trials}"
        )));
    }
    let samples = centered_forms(sampler, m, trials, seed)?;
    Ok(TailEstimate::from_samples(&samples, epsilon))
}

/// Largest `c` for which the bound dominates every observed `p_hat` on the
/// fitting grid. `None` when the tail never left zero.
pub fn fit_hw_constant(tail: &TailEstimate, k: f64, pi: f64, frob: f64, spec: f64) -> Option<f64> {
    tail.epsilon
        .iter()
        .zip(&tail.p_hat)
        .filter(|(&e, &p)| e > 0.0 && p > 0.0)
        .map(|(&e, &p)| (2.0 / p).ln() / hw_exponent(e, k, pi, frob, spec))
        .reduce(f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusFit {
    pub grid: Vec<f64>,
    pub radii: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

fn log_fit(grid: &[f64], radii: Vec<f64>) -> Result<RadiusFit> {
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument(format!("zero radius in {radii:?}")));
    }
    let x: Vec<f64> = grid.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = radii.iter().map(|v| v.ln()).collect();
    let line = least_squares(&x, &y);
    Ok(RadiusFit {
        grid: grid.to_vec(),
        radii,
        slope: line.slope,
        intercept: line.intercept,
        residual_rms: line.residual_rms,
    })
}

/// Slope of `log(quantile radius)` against `log pi` with `M = I`.
pub fn radius_scaling_fit(
    mode: SamplerMode,
    n: usize,
    pi_grid: &[f64],
    level: f64,
    trials: usize,
    coupling: f64,
    seed: u64,
) -> Result<RadiusFit> {
    let lo = pi_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pi_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if pi_grid.len() < 4 || (hi / lo).log10() < 1.5 {
        return Err(Error::InsufficientGrid(format!(
            "need at least 4 pi values spanning 1.5 decades, got {pi_grid:?}"
        )));
    }
    let radii = pi_grid
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let sampler = SparsePairSampler::new(n, pi, mode, coupling)?;
            let draws = centered_forms(&sampler, &FormMatrix::Identity, trials, seed.wrapping_add(i as u64))?;
            let abs: Vec<f64> = draws.iter().map(|v| v.abs()).collect();
            Ok(quantile(&abs, level))
        })
        .collect::<Result<Vec<_>>>()?;
    log_fit(pi_grid, radii)
}

/// Dense-pair control: `pi = 1` and `n` varies; the radius grows like `sqrt(n)`.
pub fn radius_vs_n_fit(
    mode: SamplerMode,
    n_grid: &[usize],
    level: f64,
    trials: usize,
    coupling: f64,
    seed: u64,
) -> Result<RadiusFit> {
    if n_grid.len() < 4 {
        return Err(Error::InsufficientGrid(format!("need at least 4 n values, got {n_grid:?}")));
    }
    let radii = n_grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let sampler = SparsePairSampler::new(n, 1.0, mode, coupling)?;
            let draws = centered_forms(&sampler, &FormMatrix::Identity, trials, seed.wrapping_add(i as u64))?;
            let abs: Vec<f64> = draws.iter().map(|v| v.abs()).collect();
            Ok(quantile(&abs, level))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    log_fit(&grid, radii)
}
