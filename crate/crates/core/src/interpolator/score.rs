use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gram::{GramSolver, CANONICAL_CHUNK};
use super::projection::{marginal_scores, project_streamed, project_with_gram, Projections};
use crate::ensemble::{argmax, TestBatch, TrainingSet};
use crate::error::Result;

/// Per-class scores of one test point and the resulting prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub predicted_label: usize,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        let predicted_label = argmax(scores.iter().copied());
        Self {
            scores,
            predicted_label,
        }
    }
}

/// A training set with its factorized Gram matrix and the MNI dual
/// coefficients `A^-1 y_m`.
#[derive(Clone, Debug)]
pub struct MniFit {
    pub training: TrainingSet,
    pub gram: GramSolver,
    /// `n x k`, column `m` is `A^-1 y_m`.
    pub dual: DMatrix<f64>,
}

impl MniFit {
    pub fn new(training: TrainingSet) -> Result<Self> {
        let gram = GramSolver::build(&training)?;
        let dual = gram.solve_matrix(&training.y_centered);
        Ok(Self {
            training,
            gram,
            dual,
        })
    }

    /// Streams all features once against the dual coefficients.
    pub fn project(&self, tests: Option<&TestBatch>) -> Projections {
        project_streamed(&self.training, &self.dual, tests)
    }

    /// Same projections without a streaming pass.
    pub fn projections(&self) -> Projections {
        project_with_gram(&self.training, &self.gram, &self.dual)
    }

    /// Dense `d x k` primal coefficients `(X^w)^T A^-1 y_m`. Test use only.
    pub fn dense_coefficients(&self, cap: usize) -> Result<DMatrix<f64>> {
        let x = self.training.dense_weighted(cap)?;
        Ok(x.transpose() * &self.dual)
    }
}

/// `v = X^w x_test^w = sum_j lambda_j x_test[j] z_j` for one test point.
pub fn kernel_vector(training: &TrainingSet, tests: &TestBatch, index: usize) -> DVector<f64> {
    let sc = training.scaling;
    let n = sc.n;
    let fav = tests.coordinates(index, 0..sc.s);
    let mut v = &training.favored * DVector::from_vec(fav) * sc.lambda_f;
    let mut chunk = DMatrix::zeros(n, CANONICAL_CHUNK);
    let mut start = sc.s;
    while start < sc.d {
        let w = CANONICAL_CHUNK.min(sc.d - start);
        training
            .unfavored
            .fill(start, w, &mut chunk.as_mut_slice()[..n * w]);
        let x = DVector::from_vec(tests.coordinates(index, start..start + w));
        v.gemv(sc.lambda_u, &chunk.columns(0, w), &x, 1.0);
        start += w;
    }
    v
}

/// MNI scores `y_m^T A^-1 X^w x_test^w` through the kernel trick.
pub fn score_test_point(fit: &MniFit, tests: &TestBatch, index: usize) -> ScoreVector {
    let v = kernel_vector(&fit.training, tests, index);
    let u = fit.gram.solve(&v);
    let scores = fit.training.y_centered.tr_mul(&u);
    ScoreVector::new(scores.iter().copied().collect())
}

/// Scores of the averaging baseline for one test point.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingScore {
    pub score: ScoreVector,
    /// Classes without a single training example; their score is 0.
    pub empty_classes: Vec<usize>,
}

/// `score_m = sum_{i: l_i = m} <x_i^w, x_test^w>` through the kernel path.
pub fn averaging_classifier_score(
    training: &TrainingSet,
    tests: &TestBatch,
    index: usize,
) -> AveragingScore {
    let v = kernel_vector(training, tests, index);
    let scores = training.one_hot().tr_mul(&v);
    AveragingScore {
        score: ScoreVector::new(scores.iter().copied().collect()),
        empty_classes: empty_classes(training),
    }
}

pub fn empty_classes(training: &TrainingSet) -> Vec<usize> {
    training
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(m, _)| m)
        .collect()
}

/// How batch scoring treats the unfavored test coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestScoring {
    /// Generate every coordinate of every test point and stream it.
    Streamed,
    /// Draw the unfavored score contribution from its exact conditional
    /// Gaussian law; see [`marginal_scores`](super::marginal_scores).
    #[default]
    Marginal,
}

/// MNI scores for a whole batch (`k x T`). The streamed route agrees with
/// [`score_test_point`] up to rounding.
pub fn mni_batch_scores(fit: &MniFit, tests: &TestBatch, mode: TestScoring) -> DMatrix<f64> {
    match mode {
        TestScoring::Streamed => fit.project(Some(tests)).scores.expect("scores requested"),
        TestScoring::Marginal => marginal_scores(&fit.training, &fit.projections(), tests),
    }
}

/// Averaging scores for a whole batch (`k x T`).
pub fn averaging_batch_scores(training: &TrainingSet, tests: &TestBatch, mode: TestScoring) -> DMatrix<f64> {
    let oh = training.one_hot();
    match mode {
        TestScoring::Streamed => project_streamed(training, &oh, Some(tests))
            .scores
            .expect("scores requested"),
        TestScoring::Marginal => marginal_scores(training, &project_streamed(training, &oh, None), tests),
    }
}

/// Converts a `k x T` score matrix into per-point predictions.
pub fn predictions(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .column_iter()
        .map(|col| argmax(col.iter().copied()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{BilevelParams, TestPoint};

    fn small(n: usize, p: f64, seed: u64) -> MniFit {
        let sc = BilevelParams {
            n,
            p,
            q: 0.3,
            r: 0.6,
            t: 0.3,
            c_k: 2,
        }
        .derive()
        .unwrap();
        MniFit::new(TrainingSet::generate(&sc, seed)).unwrap()
    }

    #[test]
    fn kernel_route_matches_dense_coefficients() {
        let fit = small(20, 1.68, 3);
        let sc = fit.training.scaling;
        let tests = TestBatch::sample(&sc, 99, 5);
        let coef = fit.dense_coefficients(1_000_000).unwrap();
        let batch = mni_batch_scores(&fit, &tests, TestScoring::Streamed);
        for p in &tests.points {
            let x = tests.coordinates(p.index, 0..sc.d);
            let xw = DVector::from_fn(sc.d, |j, _| sc.lambda(j).sqrt() * x[j]);
            let dense = coef.tr_mul(&xw);
            let kernel = score_test_point(&fit, &tests, p.index);
            for m in 0..sc.k {
                let scale = dense.amax();
                assert!((kernel.scores[m] - dense[m]).abs() <= 1e-10 * scale);
                assert!((batch[(m, p.index)] - dense[m]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn zero_test_point_scores_zero() {
        let fit = small(30, 1.5, 1);
        let v = fit.dual.tr_mul(&DVector::zeros(30));
        assert!(v.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn training_points_are_interpolated() {
        let fit = small(24, 1.7, 8);
        let sc = fit.training.scaling;
        let x = fit.training.dense_weighted(1_000_000).unwrap();
        let coef = fit.dense_coefficients(1_000_000).unwrap();
        let fitted = &x * &coef;
        for m in 0..sc.k {
            let ym = fit.training.y_centered.column(m);
            assert!((fitted.column(m) - ym).norm() <= 1e-7 * ym.norm());
        }
        // through the kernel route: v = X^w x_i^w = A e_i for a training point
        for i in [0, 5, 23] {
            let v = fit.gram.matrix().column(i).into_owned();
            let u = fit.gram.solve(&v);
            let scores = fit.training.y_centered.tr_mul(&u);
            for m in 0..sc.k {
                assert!((scores[m] - fit.training.y_centered[(i, m)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn averaging_matches_dense_and_is_linear() {
        let fit = small(20, 1.68, 5);
        let ts = &fit.training;
        let sc = ts.scaling;
        let tests = TestBatch::sample(&sc, 4, 3);
        let x = ts.dense_weighted(1_000_000).unwrap();
        let f = x.transpose() * ts.one_hot();
        let batch = averaging_batch_scores(ts, &tests, TestScoring::Streamed);
        for p in &tests.points {
            let xt = tests.coordinates(p.index, 0..sc.d);
            let xw = DVector::from_fn(sc.d, |j, _| sc.lambda(j).sqrt() * xt[j]);
            let dense = f.tr_mul(&xw);
            let kernel = averaging_classifier_score(ts, &tests, p.index);
            for m in 0..sc.k {
                let scale = dense.amax();
                assert!((kernel.score.scores[m] - dense[m]).abs() <= 1e-10 * scale);
                assert!((batch[(m, p.index)] - dense[m]).abs() <= 1e-10 * scale);
            }
            let doubled = f.tr_mul(&(&xw * 2.0));
            assert!((doubled - dense * 2.0).amax() < 1e-9);
        }
    }

    #[test]
    fn averaging_self_score_for_single_example() {
        // one training row of class 0 scored against itself
        let fit = small(20, 1.68, 5);
        let ts = &fit.training;
        let i = ts.labels.iter().position(|&l| l == 0).unwrap();
        let row = fit.gram.matrix()[(i, i)];
        assert!(row > 0.0);
        let onehot_i = DVector::from_fn(ts.k(), |m, _| f64::from(u8::from(m == 0)));
        let score = onehot_i * row;
        assert_eq!(ScoreVector::new(score.iter().copied().collect()).predicted_label, 0);
    }

    #[test]
    fn empty_classes_flagged() {
        let fit = small(20, 1.68, 5);
        let mut ts = fit.training.clone();
        for l in ts.labels.iter_mut() {
            *l = 0;
        }
        assert_eq!(empty_classes(&ts), (1..ts.k()).collect::<Vec<_>>());
        let tests = TestBatch::sample(&ts.scaling, 1, 1);
        let a = averaging_classifier_score(&ts, &tests, 0);
        assert!(a.score.scores[1..].iter().all(|&s| s == 0.0));
        let _ = TestPoint {
            index: 0,
            label_part: vec![],
            true_label: 0,
        };
    }

    #[test]
    fn gram_projection_matches_streamed_projection() {
        let fit = small(30, 1.7, 11);
        let a = fit.project(None);
        let b = fit.projections();
        assert!((&a.favored - &b.favored).amax() <= 1e-12 * a.favored.amax());
        let sa = &a.unfavored_second_moment;
        let sb = &b.unfavored_second_moment;
        assert!((sa - sb).amax() <= 1e-9 * sa.amax());
    }

    #[test]
    fn marginal_scores_share_the_favored_part_and_covariance() {
        let fit = small(30, 1.7, 12);
        let sc = fit.training.scaling;
        let tests = TestBatch::sample(&sc, 5, 4000);
        let streamed = mni_batch_scores(&fit, &tests, TestScoring::Streamed);
        let marginal = mni_batch_scores(&fit, &tests, TestScoring::Marginal);
        let proj = fit.projections();
        let mut fav = DMatrix::zeros(sc.s, tests.len());
        tests.fill(0, sc.s, fav.as_mut_slice());
        let fav_scores = proj.favored.tr_mul(&fav) * sc.lambda_f;
        let rs = &streamed - &fav_scores;
        let rm = &marginal - &fav_scores;
        let t = tests.len() as f64;
        let cov_s = &rs * rs.transpose() / t;
        let cov_m = &rm * rm.transpose() / t;
        let c = &proj.unfavored_second_moment;
        let scale = c.diagonal().amax();
        // sampling error of a 4000-draw covariance is about 2.2% of scale
        assert!((&cov_s - c).amax() < 0.1 * scale);
        assert!((&cov_m - c).amax() < 0.1 * scale);
    }
}
