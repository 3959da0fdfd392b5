//! Dense kernels shared by the Gram assembly and the projection passes.

use nalgebra::{Cholesky, DMatrix, DMatrixView, DMatrixViewMut, DVector, Dyn};

use crate::error::{Error, Result};

/// Row-tile height of the lower-triangular rank-update.
const TILE: usize = 128;

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
/// Runs on `matrixmultiply` with the views' native strides, so transposes
/// are free.
pub fn gemm(
    alpha: f64,
    a: &DMatrixView<'_, f64>,
    transpose_a: bool,
    b: &DMatrixView<'_, f64>,
    transpose_b: bool,
    beta: f64,
    c: &mut DMatrixViewMut<'_, f64>,
) {
    let (m, ka) = if transpose_a { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    let (kb, n) = if transpose_b { (b.ncols(), b.nrows()) } else { (b.nrows(), b.ncols()) };
    assert_eq!(ka, kb, "inner dimensions differ");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    let (ra, ca) = a.strides();
    let (rb, cb) = b.strides();
    let (rc, cc) = c.strides();
    let (rsa, csa) = if transpose_a { (ca, ra) } else { (ra, ca) };
    let (rsb, csb) = if transpose_b { (cb, rb) } else { (rb, cb) };
    // SAFETY: the views guarantee in-bounds strided storage for the stated
    // shapes, and `c` is a unique borrow that cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            ka,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rc as isize,
            cc as isize,
        );
    }
}

/// `a[lower] += alpha * z * z^T`, touching only tiles on or below the
/// diagonal. Call [`mirror_lower`] once accumulation is finished.
pub fn syrk_lower_add(a: &mut DMatrix<f64>, z: DMatrixView<'_, f64>, alpha: f64) {
    let n = z.nrows();
    assert_eq!(a.nrows(), n);
    if z.ncols() == 0 {
        return;
    }
    if n <= TILE {
        gemm(alpha, &z, false, &z, true, 1.0, &mut a.view_mut((0, 0), (n, n)));
        return;
    }
    let mut i0 = 0;
    while i0 < n {
        let h = TILE.min(n - i0);
        let rows_i = z.rows(i0, h);
        let mut j0 = 0;
        while j0 <= i0 {
            let w = TILE.min(n - j0);
            let rows_j = z.rows(j0, w);
            gemm(
                alpha,
                &rows_i,
                false,
                &rows_j,
                true,
                1.0,
                &mut a.view_mut((i0, j0), (h, w)),
            );
            j0 += TILE;
        }
        i0 += TILE;
    }
}

/// Copies the lower triangle onto the upper one.
pub fn mirror_lower(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// Cholesky factorization with a single jitter retry of
/// `1e-10 * trace / n` on the diagonal.
pub fn factorize(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok((chol, 0.0));
    }
    let n = a.nrows().max(1);
    let jitter = 1e-10 * a.trace() / n as f64;
    let mut shifted = a.clone();
    for i in 0..a.nrows() {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted)
        .map(|chol| (chol, jitter))
        .ok_or(Error::FactorizationFailure { jitter })
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

/// Both sides of `lambda_min(M) x^T B^T B x <= x^T B^T M B x`, which holds
/// for symmetric positive semidefinite `M`.
pub fn psd_coupling_sides(m: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>) -> (f64, f64) {
    let bx = b * x;
    let lambda_min = symmetric_eigenvalues(m).last().copied().unwrap_or(0.0);
    (lambda_min * bx.norm_squared(), bx.dot(&(m * &bx)))
}

pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo(n: usize, m: usize, salt: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |i, j| (((i * 31 + j * 17 + salt) % 23) as f64 - 11.0) / 7.0)
    }

    #[test]
    fn tiled_update_matches_dense_product() {
        for &n in &[5, 128, 129, 300] {
            let z = pseudo(n, 37, n);
            let mut a = DMatrix::zeros(n, n);
            syrk_lower_add(&mut a, z.as_view(), 0.5);
            mirror_lower(&mut a);
            let dense = &z * z.transpose() * 0.5;
            assert!(relative_error(&a, &dense) < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn strided_gemm_handles_transposes() {
        let a = pseudo(7, 4, 2);
        let b = pseudo(7, 3, 5);
        let mut c = DMatrix::from_element(4, 3, 1.0);
        gemm(2.0, &a.as_view(), true, &b.as_view(), false, 0.5, &mut c.as_view_mut());
        let expected = a.transpose() * &b * 2.0 + DMatrix::from_element(4, 3, 0.5);
        assert!(relative_error(&c, &expected) < 1e-14);
        let mut d = DMatrix::zeros(3, 4);
        gemm(1.0, &b.as_view(), true, &a.as_view(), false, 0.0, &mut d.as_view_mut());
        assert!(relative_error(&d, &(b.transpose() * &a)) < 1e-14);
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let z = pseudo(6, 2, 1);
        let a = &z * z.transpose();
        let (_, jitter) = factorize(&a).unwrap();
        assert!(jitter > 0.0);
        let (_, none) = factorize(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(factorize(&a), Err(Error::FactorizationFailure { .. })));
    }
}
