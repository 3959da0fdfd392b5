use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::ensemble::TrainingSet;
use crate::error::Result;
use crate::linalg::{factorize, mirror_lower, syrk_lower_add};

/// Width of the canonical feature chunks used by every streamed reduction.
/// Fixing it makes results independent of the user-facing block size.
pub const CANONICAL_CHUNK: usize = 512;

/// The `n x n` Gram matrix `A = X^w (X^w)^T` and its Cholesky factor.
#[derive(Clone, Debug)]
pub struct GramSolver {
    a: DMatrix<f64>,
    unfavored: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter_applied: f64,
}

impl GramSolver {
    /// Assembles `A` from one favored rank-`s` update plus the streamed
    /// unfavored columns, reduced in ascending canonical chunks.
    pub fn build(training: &TrainingSet) -> Result<Self> {
        let sc = training.scaling;
        let n = sc.n;
        let mut raw = DMatrix::zeros(n, n);
        let mut chunk = DMatrix::zeros(n, CANONICAL_CHUNK);
        let mut start = sc.s;
        while start < sc.d {
            let width = CANONICAL_CHUNK.min(sc.d - start);
            training
                .unfavored
                .fill(start, width, &mut chunk.as_mut_slice()[..n * width]);
            syrk_lower_add(&mut raw, chunk.columns(0, width), 1.0);
            start += width;
        }
        mirror_lower(&mut raw);
        let unfavored = raw * sc.lambda_u;
        let mut a = unfavored.clone();
        syrk_lower_add(&mut a, training.favored.as_view(), sc.lambda_f);
        mirror_lower(&mut a);
        Self::from_parts(a, unfavored)
    }

    /// Wraps an explicit symmetric positive-definite matrix.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        let unfavored = DMatrix::zeros(a.nrows(), a.ncols());
        Self::from_parts(a, unfavored)
    }

    fn from_parts(a: DMatrix<f64>, unfavored: DMatrix<f64>) -> Result<Self> {
        let (chol, jitter_applied) = factorize(&a)?;
        Ok(Self {
            a,
            unfavored,
            chol,
            jitter_applied,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The weighted unfavored part `A_U = lambda_U * sum_{j >= s} z_j z_j^T`.
    pub fn unfavored(&self) -> &DMatrix<f64> {
        &self.unfavored
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::BilevelParams;
    use crate::linalg::{relative_error, symmetric_eigenvalues};

    #[test]
    fn orthonormal_rows_give_identity() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let g = GramSolver::from_matrix(&z * z.transpose()).unwrap();
        assert_eq!(g.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn scalar_matrix_solve() {
        let g = GramSolver::from_matrix(DMatrix::identity(4, 4) * 2.0).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert!((g.solve(&v) - &v / 2.0).norm() < 1e-15);
        assert_eq!(g.solve(&DVector::zeros(4)), DVector::zeros(4));
    }

    #[test]
    fn matches_dense_product() {
        let params = BilevelParams {
            n: 20,
            p: 1.77,
            q: 0.3,
            r: 0.6,
            t: 0.3,
            c_k: 1,
        };
        let sc = params.derive().unwrap();
        assert!(sc.d >= 200);
        let ts = TrainingSet::generate(&sc, 17);
        let g = GramSolver::build(&ts).unwrap();
        let x = ts.dense_weighted(1_000_000).unwrap();
        let dense = &x * x.transpose();
        assert!(relative_error(g.matrix(), &dense) < 1e-10);
        let asym = relative_error(g.matrix(), &g.matrix().transpose());
        assert!(asym < 1e-9);
    }

    #[test]
    fn solve_residual_and_dense_inverse() {
        let sc = BilevelParams {
            n: 60,
            p: 1.6,
            q: 0.4,
            r: 0.5,
            t: 0.2,
            c_k: 1,
        }
        .derive()
        .unwrap();
        let ts = TrainingSet::generate(&sc, 2);
        let g = GramSolver::build(&ts).unwrap();
        let v = DVector::from_fn(sc.n, |i, _| ((i * 37 % 11) as f64) - 5.0);
        let u = g.solve(&v);
        assert!((g.matrix() * &u - &v).norm() <= 1e-8 * v.norm());
        let inv = g.matrix().clone().try_inverse().unwrap();
        assert!((inv * &v - &u).norm() <= 1e-8 * u.norm());
    }

    #[test]
    fn flat_spectrum_when_regression_fails() {
        let sc = BilevelParams {
            n: 200,
            p: 2.0,
            q: 0.9,
            r: 0.6,
            t: 0.3,
            c_k: 1,
        }
        .derive()
        .unwrap();
        let ts = TrainingSet::generate(&sc, 4);
        let g = GramSolver::build(&ts).unwrap();
        let np = 200f64.powi(2);
        for e in symmetric_eigenvalues(g.matrix()) {
            assert!(e > 0.5 * np && e < 1.5 * np, "{e}");
        }
    }
}
