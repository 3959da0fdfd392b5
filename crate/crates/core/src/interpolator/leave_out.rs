use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gram::GramSolver;
use crate::ensemble::TrainingSet;
use crate::error::{Error, Result};
use crate::linalg::{mirror_lower, symmetric_eigenvalues, syrk_lower_add};

/// `A_{-S}`, its factorization, and the hat matrix `H_{T,S}` for a removed
/// favored set `T` inside `S`. Feature indices are zero-based.
#[derive(Clone, Debug)]
pub struct LeaveOutSolver {
    pub removed: Vec<usize>,
    pub superset: Vec<usize>,
    /// Factorized `A_{-S} = sum_{j not in S} lambda_j z_j z_j^T`.
    pub gram: GramSolver,
    /// `n x |T|` weighted block `W_T = sqrt(lambda_F) Z_T`.
    pub w_t: DMatrix<f64>,
    /// `|T| x |T|` hat matrix `W_T^T A_{-S}^-1 W_T`.
    pub hat: DMatrix<f64>,
}

fn checked_set(name: &str, set: &[usize], s: usize) -> Result<BTreeSet<usize>> {
    let out: BTreeSet<usize> = set.iter().copied().collect();
    if out.len() != set.len() {
        return Err(Error::InvalidSubset(format!("{name} has repeated indices")));
    }
    if let Some(&j) = out.iter().find(|&&j| j >= s) {
        return Err(Error::InvalidSubset(format!(
            "{name} contains feature {j}, outside the favored block 0..{s}"
        )));
    }
    Ok(out)
}

/// Builds `A_{-S}` by re-accumulating `A_U` plus the favored columns outside
/// `S`, then forms `H_{T,S}`.
pub fn leave_out(
    training: &TrainingSet,
    gram: &GramSolver,
    removed: &[usize],
    superset: &[usize],
) -> Result<LeaveOutSolver> {
    let s = training.scaling.s;
    let t_set = checked_set("T", removed, s)?;
    let s_set = checked_set("S", superset, s)?;
    if t_set.is_empty() {
        return Err(Error::InvalidSubset("T is empty".into()));
    }
    if !t_set.is_subset(&s_set) {
        return Err(Error::InvalidSubset("T is not a subset of S".into()));
    }
    let lf = training.scaling.lambda_f;
    let kept: Vec<usize> = (0..s).filter(|j| !s_set.contains(j)).collect();
    let kept_cols = training.favored.select_columns(&kept);
    let mut a = gram.unfavored().clone();
    syrk_lower_add(&mut a, kept_cols.as_view(), lf);
    mirror_lower(&mut a);
    let minus = GramSolver::from_matrix(a)?;

    let t_vec: Vec<usize> = t_set.into_iter().collect();
    let w_t = training.favored.select_columns(&t_vec) * lf.sqrt();
    let solved = minus.solve_matrix(&w_t);
    let mut hat = w_t.tr_mul(&solved);
    hat = (&hat + hat.transpose()) * 0.5;
    Ok(LeaveOutSolver {
        removed: t_vec,
        superset: s_set.into_iter().collect(),
        gram: minus,
        w_t,
        hat,
    })
}

impl LeaveOutSolver {
    /// Right side of the push-through identity,
    /// `(I + H_T)^-1 W_T^T A_{-T}^-1 v`. Requires `T = S`.
    pub fn push_through(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if self.removed != self.superset {
            return Err(Error::InvalidSubset(
                "push-through needs T = S".into(),
            ));
        }
        let m = self.hat.nrows();
        let inner = self.w_t.tr_mul(&self.gram.solve(v));
        let shifted = &self.hat + DMatrix::identity(m, m);
        let chol = shifted
            .cholesky()
            .ok_or(Error::FactorizationFailure { jitter: 0.0 })?;
        Ok(chol.solve(&inner))
    }
}

/// Flatness statistics of `(I + H_{T,S})^-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatSpectrumReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub max_min_ratio: f64,
    /// `(min + max) / 2` divided by `min{mu, 1}`.
    pub midpoint_ratio: f64,
}

pub fn hat_spectrum_report(solver: &LeaveOutSolver, mu: f64) -> HatSpectrumReport {
    let h = symmetric_eigenvalues(&solver.hat);
    // eigenvalues of (I + H)^-1 are 1 / (1 + h_i); descending h gives ascending
    let min_eigenvalue = 1.0 / (1.0 + h[0]);
    let max_eigenvalue = 1.0 / (1.0 + h[h.len() - 1]);
    HatSpectrumReport {
        min_eigenvalue,
        max_eigenvalue,
        max_min_ratio: max_eigenvalue / min_eigenvalue,
        midpoint_ratio: 0.5 * (min_eigenvalue + max_eigenvalue) / mu.min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{BilevelParams, DerivedScaling};
    use crate::linalg::relative_error;

    fn instance(n: usize, seed: u64) -> (TrainingSet, GramSolver) {
        let sc: DerivedScaling = BilevelParams {
            n,
            p: 1.6,
            q: 0.3,
            r: 0.6,
            t: 0.3,
            c_k: 1,
        }
        .derive()
        .unwrap();
        let ts = TrainingSet::generate(&sc, seed);
        let g = GramSolver::build(&ts).unwrap();
        (ts, g)
    }

    #[test]
    fn rank_one_reconstruction() {
        let (ts, g) = instance(20, 1);
        let lo = leave_out(&ts, &g, &[0], &[0]).unwrap();
        let z = ts.favored.column(0);
        let rebuilt = lo.gram.matrix() + z * z.transpose() * ts.scaling.lambda_f;
        assert!(relative_error(&rebuilt, g.matrix()) < 1e-10);
        let h = lo.hat[(0, 0)];
        assert!(h > 0.0 && 1.0 / (1.0 + h) < 1.0);
    }

    #[test]
    fn push_through_matches_direct_solve() {
        let (ts, g) = instance(40, 2);
        let k = ts.k();
        let t: Vec<usize> = (0..k).collect();
        let lo = leave_out(&ts, &g, &t, &t).unwrap();
        let dy = ts.y_centered.column(0) - ts.y_centered.column(1);
        let lhs = lo.w_t.tr_mul(&g.solve(&dy));
        let rhs = lo.push_through(&dy).unwrap();
        assert!((&lhs - &rhs).norm() <= 1e-8 * lhs.norm());
    }

    #[test]
    fn subset_errors() {
        let (ts, g) = instance(20, 3);
        let s = ts.scaling.s;
        assert!(matches!(leave_out(&ts, &g, &[], &[0]), Err(Error::InvalidSubset(_))));
        assert!(matches!(leave_out(&ts, &g, &[1], &[0]), Err(Error::InvalidSubset(_))));
        assert!(matches!(leave_out(&ts, &g, &[s], &[s]), Err(Error::InvalidSubset(_))));
        assert!(matches!(leave_out(&ts, &g, &[0, 0], &[0]), Err(Error::InvalidSubset(_))));
        let lo = leave_out(&ts, &g, &[0], &[0, 1]).unwrap();
        assert!(lo.push_through(&DVector::zeros(20)).is_err());
    }

    #[test]
    fn hat_is_psd() {
        let (ts, g) = instance(30, 4);
        let lo = leave_out(&ts, &g, &[0, 1], &[0, 1, 2]).unwrap();
        assert!(symmetric_eigenvalues(&lo.hat).iter().all(|&e| e >= -1e-12));
        let rep = hat_spectrum_report(&lo, ts.scaling.mu);
        assert!(rep.min_eigenvalue <= rep.max_eigenvalue && rep.max_eigenvalue < 1.0);
    }
}
