use nalgebra::DMatrix;

use super::gram::{GramSolver, CANONICAL_CHUNK};
use crate::ensemble::{TestBatch, TrainingSet};
use crate::linalg::gemm;

/// Results of projecting every feature column onto a set of `n`-vectors.
///
/// With `U = A^-1 Y` the projections `z_j^T U` are the (unweighted)
/// coefficients `f_m[j] / sqrt(lambda_j)`, which is all the scoring and
/// diagnostic code ever needs from the `d`-dimensional model.
#[derive(Clone, Debug)]
pub struct Projections {
    /// `s x c`: `z_j^T U` for every favored feature.
    pub favored: DMatrix<f64>,
    /// `c x c`: `lambda_U^2 * sum_{j >= s} (z_j^T U)^T (z_j^T U)`.
    pub unfavored_second_moment: DMatrix<f64>,
    /// `c x T`: `sum_j lambda_j x_test[j] z_j^T U` per test point.
    pub scores: Option<DMatrix<f64>>,
}

/// Projections without streaming: the unfavored second moment equals
/// `lambda_U U^T A_U U`, and `A_U` is kept by the Gram solver.
pub fn project_with_gram(training: &TrainingSet, gram: &GramSolver, u: &DMatrix<f64>) -> Projections {
    let favored = training.favored.tr_mul(u);
    let au_u = gram.unfavored() * u;
    let mut second = u.tr_mul(&au_u) * training.scaling.lambda_u;
    second = (&second + second.transpose()) * 0.5;
    Projections {
        favored,
        unfavored_second_moment: second,
        scores: None,
    }
}

/// Test scores with the unfavored contribution drawn in score space.
///
/// Given the training data, `sum_{j >= s} lambda_U x_test[j] z_j^T U` is
/// exactly `N(0, C)` with `C` the unfavored second moment, because the
/// unfavored test coordinates are i.i.d. standard normal and independent of
/// everything else. Sampling it as `C^{1/2} g` gives scores with the same
/// joint law as the streamed route at `O(s + c)` cost per point.
pub fn marginal_scores(training: &TrainingSet, proj: &Projections, tests: &TestBatch) -> DMatrix<f64> {
    let sc = training.scaling;
    let c = proj.favored.ncols();
    let t = tests.len();
    let mut fav_coords = DMatrix::zeros(sc.s, t);
    tests.fill(0, sc.s, fav_coords.as_mut_slice());
    let mut scores = proj.favored.tr_mul(&fav_coords) * sc.lambda_f;
    let root = psd_root(&proj.unfavored_second_moment);
    for p in 0..t {
        let g = nalgebra::DVector::from_vec(tests.tail_normals(tests.points[p].index, c));
        let add = &root * g;
        let mut col = scores.column_mut(p);
        col += add;
    }
    scores
}

/// `Q diag(sqrt(max(l, 0)))` from the eigendecomposition `C = Q diag(l) Q^T`.
fn psd_root(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = c.clone().symmetric_eigen();
    let mut root = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let w = l.max(0.0).sqrt();
        root.column_mut(j).scale_mut(w);
    }
    root
}

/// Projects all `d` feature columns onto the columns of `u` in one streamed
/// pass, optionally accumulating test scores on the way.
pub fn project_streamed(training: &TrainingSet, u: &DMatrix<f64>, tests: Option<&TestBatch>) -> Projections {
    let sc = training.scaling;
    let (n, c) = (sc.n, u.ncols());
    assert_eq!(u.nrows(), n);
    let uv = u.as_view();

    let mut favored = DMatrix::zeros(sc.s, c);
    gemm(
        1.0,
        &training.favored.as_view(),
        true,
        &uv,
        false,
        0.0,
        &mut favored.as_view_mut(),
    );

    let t = tests.map_or(0, TestBatch::len);
    let mut scores = tests.map(|_| DMatrix::zeros(c, t));
    if let (Some(batch), Some(out)) = (tests, scores.as_mut()) {
        let mut fav_coords = DMatrix::zeros(sc.s, t);
        batch.fill(0, sc.s, fav_coords.as_mut_slice());
        gemm(
            sc.lambda_f,
            &favored.as_view(),
            true,
            &fav_coords.as_view(),
            false,
            1.0,
            &mut out.as_view_mut(),
        );
    }

    let mut second = DMatrix::zeros(c, c);
    let mut chunk = DMatrix::zeros(n, CANONICAL_CHUNK);
    let mut g = DMatrix::zeros(CANONICAL_CHUNK, c);
    let mut coords = DMatrix::zeros(CANONICAL_CHUNK, t);
    let lu2 = sc.lambda_u * sc.lambda_u;
    let mut start = sc.s;
    while start < sc.d {
        let w = CANONICAL_CHUNK.min(sc.d - start);
        training
            .unfavored
            .fill(start, w, &mut chunk.as_mut_slice()[..n * w]);
        let mut gw = g.rows_mut(0, w);
        gemm(1.0, &chunk.columns(0, w), true, &uv, false, 0.0, &mut gw);
        let gv = g.rows(0, w);
        gemm(lu2, &gv, true, &gv, false, 1.0, &mut second.as_view_mut());
        if let (Some(batch), Some(out)) = (tests, scores.as_mut()) {
            // column-major w x T block, one column per test point
            let buf = &mut coords.as_mut_slice()[..w * t];
            batch.fill(start, w, buf);
            let xc = nalgebra::DMatrixView::from_slice(buf, w, t);
            gemm(sc.lambda_u, &gv, true, &xc, false, 1.0, &mut out.as_view_mut());
        }
        start += w;
    }

    Projections {
        favored,
        unfavored_second_moment: second,
        scores,
    }
}
