use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{TestBatch, TrainingSet};
use crate::error::{Error, Result};
use crate::interpolator::{MniFit, Projections, CANONICAL_CHUNK};

/// An MNI fit together with the projections of every feature onto the dual
/// coefficients. All per-instance diagnostics read from this.
#[derive(Clone, Debug)]
pub struct FittedInstance {
    pub fit: MniFit,
    pub projections: Projections,
}

impl FittedInstance {
    pub fn new(training: TrainingSet) -> Result<Self> {
        let fit = MniFit::new(training)?;
        let projections = fit.projections();
        Ok(Self { fit, projections })
    }

    pub fn training(&self) -> &TrainingSet {
        &self.fit.training
    }

    pub fn k(&self) -> usize {
        self.fit.training.k()
    }

    /// `h_{a,b}[j] = z_j^T A^-1 (y_a - y_b)` over the favored block.
    pub fn favored_h(&self, a: usize, b: usize) -> DVector<f64> {
        let p = &self.projections.favored;
        p.column(a) - p.column(b)
    }

    /// `sum_{j >= s} lambda_U^2 h_{a,b}[j] h_{c,d}[j]`.
    pub fn unfavored_cross(&self, (a, b): (usize, usize), (c, d): (usize, usize)) -> f64 {
        let m = &self.projections.unfavored_second_moment;
        m[(a, c)] - m[(a, d)] - m[(b, c)] + m[(b, d)]
    }

    pub(crate) fn check_pair(&self, alpha: usize, beta: usize) -> Result<()> {
        let k = self.k();
        if alpha >= k || beta >= k || alpha == beta {
            return Err(Error::InvalidArgument(format!(
                "need distinct classes below k = {k}, got ({alpha}, {beta})"
            )));
        }
        Ok(())
    }
}

/// Survival and contamination of one class pair, split by feature group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalContamination {
    pub alpha: usize,
    pub beta: usize,
    pub survival: f64,
    pub survival_beta: f64,
    pub cn_label: f64,
    pub cn_favored: f64,
    pub cn_unfavored: f64,
    pub cn_total: f64,
    pub su_cn_ratio: f64,
    /// Missing when the survival is degenerate.
    pub survival_variation: Option<f64>,
    pub degenerate_survival: bool,
}

pub fn survival_contamination(
    inst: &FittedInstance,
    alpha: usize,
    beta: usize,
) -> Result<SurvivalContamination> {
    inst.check_pair(alpha, beta)?;
    let sc = inst.training().scaling;
    let h = inst.favored_h(alpha, beta);
    let lf2 = sc.lambda_f * sc.lambda_f;
    let mut label = 0.0;
    let mut favored = 0.0;
    for (j, hj) in h.iter().enumerate() {
        if j == alpha || j == beta {
            continue;
        }
        if j < sc.k {
            label += hj * hj;
        } else {
            favored += hj * hj;
        }
    }
    let cn_label = (lf2 * label).sqrt();
    let cn_favored = (lf2 * favored).sqrt();
    let cn_unfavored = inst
        .unfavored_cross((alpha, beta), (alpha, beta))
        .max(0.0)
        .sqrt();
    let cn_total = (cn_label * cn_label + cn_favored * cn_favored + cn_unfavored * cn_unfavored).sqrt();
    let survival = sc.lambda_f * h[alpha];
    // h_{b,a}[b] = -h_{a,b}[b]
    let survival_beta = -sc.lambda_f * h[beta];
    let degenerate_survival = h[alpha].abs() < 1e-300;
    let survival_variation =
        (!degenerate_survival).then(|| ((h[alpha] + h[beta]) / h[alpha]).abs());
    Ok(SurvivalContamination {
        alpha,
        beta,
        survival,
        survival_beta,
        cn_label,
        cn_favored,
        cn_unfavored,
        cn_total,
        su_cn_ratio: survival / cn_total,
        survival_variation,
        degenerate_survival,
    })
}

/// `CN_{a,b}` from a single streamed sum over every feature, without the
/// projection cache. Used to cross-check the three-way split.
pub fn contamination_full_sum(fit: &MniFit, alpha: usize, beta: usize) -> f64 {
    let ts = &fit.training;
    let sc = ts.scaling;
    let dy = ts.y_centered.column(alpha) - ts.y_centered.column(beta);
    let u = fit.gram.solve(&dy);
    let mut total = 0.0;
    for j in 0..sc.s {
        if j != alpha && j != beta {
            let v = sc.lambda_f * ts.favored.column(j).dot(&u);
            total += v * v;
        }
    }
    let n = sc.n;
    let mut chunk = DMatrix::zeros(n, CANONICAL_CHUNK);
    let mut start = sc.s;
    while start < sc.d {
        let w = CANONICAL_CHUNK.min(sc.d - start);
        ts.unfavored.fill(start, w, &mut chunk.as_mut_slice()[..n * w]);
        let g = chunk.columns(0, w).tr_mul(&u);
        total += sc.lambda_u * sc.lambda_u * g.norm_squared();
        start += w;
    }
    total.sqrt()
}

/// Draws of the normalized contaminations `Z^(b)` for every `b != alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSamples {
    pub alpha: usize,
    pub betas: Vec<usize>,
    /// One row per test draw, one column per entry of `betas`.
    pub samples: Vec<Vec<f64>>,
}

impl ContaminationSamples {
    pub fn column(&self, b: usize) -> Vec<f64> {
        self.samples.iter().map(|row| row[b]).collect()
    }
}

/// Uses the per-class scores of fresh test points: the pair's score gap
/// minus its two label coordinates is exactly `CN * Z^(b)`.
pub fn normalized_contamination_samples(
    inst: &FittedInstance,
    alpha: usize,
    test_seed: u64,
    count: usize,
) -> Result<ContaminationSamples> {
    let k = inst.k();
    if alpha >= k {
        return Err(Error::InvalidArgument(format!("class {alpha} not below k = {k}")));
    }
    let sc = inst.training().scaling;
    let betas: Vec<usize> = (0..k).filter(|&b| b != alpha).collect();
    let mut cn = Vec::with_capacity(betas.len());
    for &b in &betas {
        let c = survival_contamination(inst, alpha, b)?.cn_total;
        if !(c > 0.0) {
            return Err(Error::ZeroContamination { alpha, beta: b });
        }
        cn.push(c);
    }
    let tests = TestBatch::sample(&sc, test_seed, count);
    let scores = inst.fit.project(Some(&tests)).scores.expect("scores requested");
    let p = &inst.projections.favored;
    let samples = tests
        .points
        .iter()
        .map(|pt| {
            let x = &pt.label_part;
            betas
                .iter()
                .zip(&cn)
                .map(|(&b, &c)| {
                    let h_ba = |j: usize| p[(j, b)] - p[(j, alpha)];
                    let gap = scores[(b, pt.index)] - scores[(alpha, pt.index)];
                    let own = sc.lambda_f * (x[alpha] * h_ba(alpha) + x[b] * h_ba(b));
                    (gap - own) / c
                })
                .collect()
        })
        .collect();
    Ok(ContaminationSamples {
        alpha,
        betas,
        samples,
    })
}

/// Normalized empirical `z_a^T y_a / ((n/k) sqrt(ln k))`.
pub fn feature_label_correlation(training: &TrainingSet, alpha: usize, beta: usize) -> f64 {
    let z = training.favored.column(alpha);
    z.dot(&training.y_centered.column(beta))
}

pub fn feature_label_normalizer(n: usize, k: usize) -> f64 {
    n as f64 / k as f64 * (k as f64).ln().sqrt()
}
