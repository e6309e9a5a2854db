//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetrize in place: `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Eigenvalues and eigenvectors of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = symmetrize(m).symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[0]
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

/// Spectral norm of a general matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    sym_op_norm(&g).max(0.0).sqrt()
}

/// Whether a symmetric matrix is PSD up to a relative tolerance.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let scale = sym_op_norm(m);
    min_eig(m) >= -rel_tol * scale.max(1e-300)
}

/// Symmetric PSD square root, negative eigenvalues clipped at zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
}

/// Thin factor `H` (r x n) with `H^T H = M` for symmetric PSD `M`, dropping
/// eigenvalues below `rel_tol * lambda_max`. Returns an error when `M` has an
/// eigenvalue below `-rel_tol * lambda_max` (not PSD).
pub fn psd_sqrt_reduced(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "square matrix expected, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (vals, vecs) = sym_eigen(m);
    let lmax = vals.iter().fold(0.0_f64, |a, v| a.max(*v));
    let cut = rel_tol * lmax.max(1e-300);
    if vals.iter().any(|&v| v < -cut) {
        return Err(Error::Input(format!(
            "matrix is not positive semidefinite (min eigenvalue {:.3e})",
            vals[0]
        )));
    }
    let kept: Vec<usize> = (0..n).filter(|&i| vals[i] > cut).collect();
    let mut h = DMatrix::zeros(kept.len(), n);
    for (r, &i) in kept.iter().enumerate() {
        let row = vecs.column(i).transpose() * vals[i].sqrt();
        h.set_row(r, &row);
    }
    Ok(h)
}

/// Factor `R` with `R R^T = M` for symmetric PSD `M`: Cholesky when `M` is
/// positive definite, eigendecomposition square root otherwise.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension("square matrix expected".into()));
    }
    let sym = symmetrize(m);
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l());
    }
    let scale = sym_op_norm(&sym);
    if min_eig(&sym) < -1e-9 * scale.max(1e-300) {
        return Err(Error::Input(
            "matrix is not positive semidefinite".to_string(),
        ));
    }
    Ok(psd_sqrt(&sym))
}

/// Column rank with a relative singular-value cutoff.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .fold(0.0_f64, |a, v| a.max(*v));
    svd.singular_values
        .iter()
        .filter(|&&s| s > rel_tol * smax.max(1e-300))
        .count()
}

/// Minimum-norm least-squares solution of `A x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12).expect("svd solve")
}

/// Matrix from row-major nested data, validating rectangularity.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != nc {
            return Err(Error::Input(format!(
                "ragged matrix: row {} has {} entries, expected {}",
                i,
                r.len(),
                nc
            )));
        }
    }
    Ok(DMatrix::from_row_iterator(
        nr,
        nc,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}

/// Row-major nested data from a matrix.
pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reduced_sqrt_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let h = psd_sqrt_reduced(&m, 1e-12).unwrap();
        assert_eq!(h.nrows(), 2);
        let back = h.transpose() * &h;
        assert_abs_diff_eq!(back, m, epsilon = 1e-12);
    }

    #[test]
    fn reduced_sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_sqrt_reduced(&m, 1e-12).is_err());
    }

    #[test]
    fn psd_factor_matches_product() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = psd_factor(&a).unwrap();
        assert_abs_diff_eq!(&r * r.transpose(), a, epsilon = 1e-12);
        // Singular case goes through the eigendecomposition path.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = psd_factor(&s).unwrap();
        assert_abs_diff_eq!(&r * r.transpose(), s, epsilon = 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(rank(&m, 1e-12), 1);
    }
}
