use serde::{Deserialize, Serialize};

use super::survival::{survival_contamination, FittedInstance};
use crate::error::{Error, Result};

/// Exact correlations of the normalized contaminations for one anchor class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub anchor: usize,
    pub betas: Vec<usize>,
    /// `E[Z^(b) Z^(b')]` indexed like `betas`.
    pub correlations: Vec<Vec<f64>>,
    /// Cosine between the weighted score directions of the anchor and each
    /// `b`, with coordinates `anchor` and `b` left out.
    pub halfspace_cosines: Vec<f64>,
}

impl CorrelationReport {
    pub fn off_diagonal(&self) -> Vec<f64> {
        let m = self.betas.len();
        let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                out.push(self.correlations[i][j]);
            }
        }
        out
    }
}

/// The shared inner product runs over `j` outside `{a, b, b'}`; the terms on
/// `b` and `b'` each multiply an independent test coordinate and have zero
/// mean, so they contribute nothing. The norms are the full contaminations.
pub fn correlation_report(inst: &FittedInstance, alpha: usize) -> Result<CorrelationReport> {
    let k = inst.k();
    if alpha >= k {
        return Err(Error::InvalidArgument(format!("class {alpha} not below k = {k}")));
    }
    let sc = inst.training().scaling;
    let lf2 = sc.lambda_f * sc.lambda_f;
    let betas: Vec<usize> = (0..k).filter(|&b| b != alpha).collect();
    let mut cn = Vec::with_capacity(betas.len());
    let mut h = Vec::with_capacity(betas.len());
    for &b in &betas {
        let c = survival_contamination(inst, alpha, b)?.cn_total;
        if !(c > 0.0) {
            return Err(Error::ZeroContamination { alpha, beta: b });
        }
        cn.push(c);
        h.push(inst.favored_h(b, alpha));
    }
    let m = betas.len();
    let mut correlations = vec![vec![0.0; m]; m];
    for i in 0..m {
        correlations[i][i] = 1.0;
        for j in (i + 1)..m {
            let (b, b2) = (betas[i], betas[j]);
            let favored: f64 = (0..sc.s)
                .filter(|&l| l != alpha && l != b && l != b2)
                .map(|l| h[i][l] * h[j][l])
                .sum();
            let num = lf2 * favored + inst.unfavored_cross((b, alpha), (b2, alpha));
            let c = num / (cn[i] * cn[j]);
            correlations[i][j] = c;
            correlations[j][i] = c;
        }
    }
    let p = &inst.projections.favored;
    let halfspace_cosines = betas
        .iter()
        .map(|&b| {
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for l in (0..sc.s).filter(|&l| l != alpha && l != b) {
                ab += p[(l, alpha)] * p[(l, b)];
                aa += p[(l, alpha)] * p[(l, alpha)];
                bb += p[(l, b)] * p[(l, b)];
            }
            let u = &inst.projections.unfavored_second_moment;
            let ab = lf2 * ab + u[(alpha, b)];
            let aa = lf2 * aa + u[(alpha, alpha)];
            let bb = lf2 * bb + u[(b, b)];
            ab / (aa * bb).sqrt()
        })
        .collect();
    Ok(CorrelationReport {
        anchor: alpha,
        betas,
        correlations,
        halfspace_cosines,
    })
}
