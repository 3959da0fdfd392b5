use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::least_squares;

/// `Pr[|<x, v>| <= eps] <= 2 eps / (sqrt(2 pi) |v|)` for `x ~ N(0, I)`.
pub fn anticoncentration_bound(epsilon: f64, v_norm: f64) -> Result<f64> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) || !(v_norm > 0.0 && v_norm.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need eps >= 0 and |v| > 0 (eps = {epsilon}, |v| = {v_norm})"
        )));
    }
    Ok(2.0 * epsilon / ((2.0 * std::f64::consts::PI).sqrt() * v_norm))
}

/// Monte Carlo `Pr[|<x, v>| <= eps]`.
pub fn empirical_small_ball(v: &[f64], epsilon: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..draws)
        .filter(|_| {
            let dot: f64 = v.iter().map(|vi| vi * rng.sample::<f64, _>(StandardNormal)).sum();
            dot.abs() <= epsilon
        })
        .count();
    hits as f64 / draws as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthantFit {
    pub rho: f64,
    pub k_grid: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

const BATCH: usize = 1 << 14;

/// Monte Carlo `Pr[max_b Z_b <= 0]` for `k` equicorrelated standard normals,
/// `Z_b = sqrt(rho) G + sqrt(1 - rho) G_b`.
pub fn orthant_probability(rho: f64, k: usize, trials: usize, seed: u64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside (0, 1)")));
    }
    if k == 0 || trials == 0 {
        return Err(Error::InvalidArgument("k and trials must be positive".into()));
    }
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let batches = trials.div_ceil(BATCH);
    let hits: usize = (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let count = BATCH.min(trials - i * BATCH);
            (0..count)
                .filter(|_| {
                    let shared = a * rng.sample::<f64, _>(StandardNormal);
                    // Z_b <= 0 iff G_b <= -shared / b; stop at the first failure
                    let limit = -shared / b;
                    (0..k).all(|_| rng.sample::<f64, _>(StandardNormal) <= limit)
                })
                .count()
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

pub fn orthant_scaling(rho: f64, k_grid: &[usize], trials: usize, seed: u64) -> Result<OrthantFit> {
    if k_grid.len() < 2 {
        return Err(Error::InsufficientGrid(format!("need at least 2 k values, got {k_grid:?}")));
    }
    let probabilities = k_grid
        .iter()
        .enumerate()
        .map(|(i, &k)| orthant_probability(rho, k, trials, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = probabilities.iter().position(|&p| p == 0.0) {
        return Err(Error::InvalidArgument(format!(
            "no orthant hits at k = {}; raise trials",
            k_grid[i]
        )));
    }
    let x: Vec<f64> = k_grid.iter().map(|&k| (k as f64).ln()).collect();
    let y: Vec<f64> = probabilities.iter().map(|p| p.ln()).collect();
    let line = least_squares(&x, &y);
    Ok(OrthantFit {
        rho,
        k_grid: k_grid.to_vec(),
        probabilities,
        slope: line.slope,
        intercept: line.intercept,
        residual_rms: line.residual_rms,
    })
}
