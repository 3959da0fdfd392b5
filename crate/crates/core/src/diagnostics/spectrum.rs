use serde::{Deserialize, Serialize};

use super::survival::FittedInstance;
use crate::error::{Error, Result};
use crate::interpolator::leave_out;
use crate::linalg::symmetric_eigenvalues;

/// Default largest `n` for dense eigendecompositions.
pub const DEFAULT_SPECTRUM_CAP: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending eigenvalues of `A_U`.
    pub a_u_eigenvalues: Vec<f64>,
    /// Descending eigenvalues of `A_{-k}`.
    pub a_minus_k_eigenvalues: Vec<f64>,
    /// `max_i |mu_i(A_U) / n^p - 1|`.
    pub a_u_flat_deviation: f64,
    /// `max_i |mu_i / n^p - 1|` over the bottom `n - (s - k)` eigenvalues
    /// of `A_{-k}`.
    pub flat_deviation: f64,
    /// Midpoint of the top `s - k` eigenvalues of `A_{-k}` over
    /// `(1 + 1/mu) n^p`; missing when `s = k`.
    pub spiked_midpoint_ratio: Option<f64>,
}

pub fn spectrum_report(inst: &FittedInstance, cap: usize) -> Result<SpectrumReport> {
    let ts = inst.training();
    let sc = ts.scaling;
    if sc.n > cap {
        return Err(Error::CapExceeded { n: sc.n, cap });
    }
    let label: Vec<usize> = (0..sc.k).collect();
    let lo = leave_out(ts, &inst.fit.gram, &label, &label)?;
    let a_u_eigenvalues = symmetric_eigenvalues(inst.fit.gram.unfavored());
    let a_minus_k_eigenvalues = symmetric_eigenvalues(lo.gram.matrix());
    // d = floor(n^p) stands in for n^p
    let np = sc.d as f64;
    let dev = |v: &[f64]| v.iter().map(|e| (e / np - 1.0).abs()).fold(0.0, f64::max);
    let spikes = sc.s - sc.k;
    let spiked_midpoint_ratio = (spikes > 0).then(|| {
        let top = &a_minus_k_eigenvalues[..spikes];
        let mid = 0.5 * (top[0] + top[spikes - 1]);
        mid / ((1.0 + 1.0 / sc.mu) * np)
    });
    Ok(SpectrumReport {
        a_u_flat_deviation: dev(&a_u_eigenvalues),
        flat_deviation: dev(&a_minus_k_eigenvalues[spikes..]),
        spiked_midpoint_ratio,
        a_u_eigenvalues,
        a_minus_k_eigenvalues,
    })
}
