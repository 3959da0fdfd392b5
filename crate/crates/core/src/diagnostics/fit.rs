use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::survival::{survival_contamination, FittedInstance};
use crate::ensemble::{BilevelParams, TrainingSet};
use crate::error::{Error, Result};
use crate::stats::{least_squares, median};

/// Log-log fit of a per-instance quantity (median over seeds) against `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub n_grid: Vec<usize>,
    pub medians: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

pub const MIN_GRID_POINTS: usize = 4;
pub const MIN_SEEDS: usize = 10;

/// Fits `log(median quantity)` against `log n`. The extractor sees the
/// family with `n` substituted and one seed.
pub fn fit_scaling_exponent<F>(
    extractor: F,
    family: &BilevelParams,
    n_grid: &[usize],
    seeds: &[u64],
) -> Result<ExponentFit>
where
    F: Fn(&BilevelParams, u64) -> Result<f64> + Sync,
{
    let mut distinct = n_grid.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < MIN_GRID_POINTS || distinct.len() != n_grid.len() {
        return Err(Error::InsufficientGrid(format!(
            "need at least {MIN_GRID_POINTS} distinct n values, got {n_grid:?}"
        )));
    }
    if seeds.len() < MIN_SEEDS {
        return Err(Error::InsufficientGrid(format!(
            "need at least {MIN_SEEDS} seeds per n, got {}",
            seeds.len()
        )));
    }
    let jobs: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, seed)| extractor(&family.with_n(n), seed))
        .collect::<Result<_>>()?;
    let medians: Vec<f64> = values.chunks(seeds.len()).map(median).collect();
    if let Some((n, m)) = n_grid.iter().zip(&medians).find(|(_, m)| !(**m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "median {m} at n = {n} has no logarithm"
        )));
    }
    let x: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let line = least_squares(&x, &y);
    Ok(ExponentFit {
        n_grid: n_grid.to_vec(),
        medians,
        slope: line.slope,
        intercept: line.intercept,
        residual_rms: line.residual_rms,
    })
}

/// Per-instance quantities with a named extractor, the pair being (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Survival,
    /// Survival divided by `min{1/mu, 1}`.
    NormalizedSurvival,
    CnLabel,
    CnFavored,
    CnUnfavored,
    CnTotal,
    SuCnRatio,
    SurvivalVariation,
}

impl Quantity {
    pub fn extract(self, params: &BilevelParams, seed: u64) -> Result<f64> {
        let sc = params.derive()?;
        let inst = FittedInstance::new(TrainingSet::generate(&sc, seed))?;
        let r = survival_contamination(&inst, 0, 1)?;
        Ok(match self {
            Quantity::Survival => r.survival,
            Quantity::NormalizedSurvival => r.survival / (1.0 / sc.mu).min(1.0),
            Quantity::CnLabel => r.cn_label,
            Quantity::CnFavored => r.cn_favored,
            Quantity::CnUnfavored => r.cn_unfavored,
            Quantity::CnTotal => r.cn_total,
            Quantity::SuCnRatio => r.su_cn_ratio,
            Quantity::SurvivalVariation => r.survival_variation.unwrap_or(f64::NAN),
        })
    }
}

/// All survival/contamination quantities of one instance, so several fits
/// can share the expensive part.
pub fn pair_report(params: &BilevelParams, seed: u64) -> Result<super::SurvivalContamination> {
    let sc = params.derive()?;
    let inst = FittedInstance::new(TrainingSet::generate(&sc, seed))?;
    survival_contamination(&inst, 0, 1)
}
