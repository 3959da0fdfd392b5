use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::sweep::{GridPoint, SweepRecord};
use super::trial::Classifier;
use crate::error::{Error, Result};
use crate::stats::{mean, variance, Z95};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub point: GridPoint,
    pub mni_mean: f64,
    pub averaging_mean: f64,
    /// `mni_mean - averaging_mean`; positive when averaging does better.
    pub difference: f64,
    /// Normal interval on the mean paired per-seed difference.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seeds: usize,
}

/// Pairs MNI and averaging records on identical grid points and seeds.
pub fn compare_classifiers(mni: &[SweepRecord], averaging: &[SweepRecord]) -> Result<Vec<ComparisonRow>> {
    if mni.len() != averaging.len() {
        return Err(Error::MismatchedGrids(format!(
            "{} MNI records vs {} averaging records",
            mni.len(),
            averaging.len()
        )));
    }
    let sorted = |v: &[SweepRecord]| {
        let mut v: Vec<SweepRecord> = v.to_vec();
        v.sort_by(|a, b| a.point.cmp_total(&b.point));
        v
    };
    let (mni, avg) = (sorted(mni), sorted(averaging));
    let mut rows = Vec::with_capacity(mni.len());
    for (m, a) in mni.iter().zip(&avg) {
        if m.point.cmp_total(&a.point) != Ordering::Equal {
            return Err(Error::MismatchedGrids(format!("{:?} vs {:?}", m.point, a.point)));
        }
        if m.seeds != a.seeds {
            return Err(Error::MismatchedGrids(format!("seed lists differ at {:?}", m.point)));
        }
        let diffs: Vec<f64> = m.error_rates.iter().zip(&a.error_rates).map(|(x, y)| x - y).collect();
        let d = mean(&diffs);
        let half = if diffs.len() > 1 {
            Z95 * (variance(&diffs) / diffs.len() as f64).sqrt()
        } else {
            f64::INFINITY
        };
        rows.push(ComparisonRow {
            point: m.point,
            mni_mean: m.mean,
            averaging_mean: a.mean,
            difference: m.mean - a.mean,
            ci_lo: d - half,
            ci_hi: d + half,
            seeds: diffs.len(),
        });
    }
    Ok(rows)
}

/// [`compare_classifiers`] on a mixed record list from one sweep.
pub fn compare_sweep(records: &[SweepRecord]) -> Result<Vec<ComparisonRow>> {
    let pick = |c: Classifier| -> Vec<SweepRecord> { records.iter().filter(|r| r.classifier == c).cloned().collect() };
    compare_classifiers(&pick(Classifier::Mni), &pick(Classifier::Averaging))
}
