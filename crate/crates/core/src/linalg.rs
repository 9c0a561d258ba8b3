//! Dense symmetric linear algebra shared by the metric learners.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Coordinates with magnitude below this are treated as zero when fixing the
/// sign of a unit eigenvector.
const SIGN_EPS: f64 = 1e-12;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Flips `v` so that its first non-negligible coordinate is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let scale = v.amax().max(f64::MIN_POSITIVE);
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_EPS * scale) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending and
/// eigenvectors (columns) in canonical sign.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Inverse of the symmetric matrix `m + ridge·I` through a Cholesky factor.
pub fn ridge_inverse(m: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let shifted = symmetrize(m) + DMatrix::identity(n, n) * ridge;
    let chol = Cholesky::new(shifted).ok_or_else(|| {
        Error::Numerical(format!(
            "matrix is not positive definite with ridge {ridge:e}; increase the ridge"
        ))
    })?;
    let inv = chol.inverse();
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "inverse is not finite with ridge {ridge:e}; increase the ridge"
        )));
    }
    Ok(symmetrize(&inv))
}

/// Projects a symmetric matrix onto the PSD cone by clamping negative
/// eigenvalues to zero.
pub fn psd_projection(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&clamped) * v.transpose()))
}

/// Solves `a·w = λ·b·w` for symmetric `a` and symmetric positive definite
/// `b`. Eigenvalues are returned descending; eigenvector columns satisfy
/// `wᵀ·b·w = 1` and carry the canonical sign.
pub fn generalized_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(symmetrize(b))
        .ok_or_else(|| Error::Numerical("right-hand matrix is not positive definite; increase the ridge".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    // a·w = λ·L·Lᵀ·w  ⇔  (L⁻¹·a·L⁻ᵀ)·u = λ·u  with  w = L⁻ᵀ·u
    let reduced = &l_inv * a * l_inv.transpose();
    let (values, u) = sym_eigen_desc(&reduced);
    let mut w = l_inv.transpose() * u;
    for j in 0..w.ncols() {
        let mut col: DVector<f64> = w.column(j).into_owned();
        canonical_sign(&mut col);
        w.set_column(j, &col);
    }
    Ok((values, w))
}

/// Quadratic form `dᵀ·m·d`, accumulated row by row.
pub fn quadratic_form(m: &DMatrix<f64>, d: &[f64]) -> f64 {
    let n = d.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * d[j];
        }
        total += d[i] * row;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigen_sorted_and_signed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[5.0, 2.0, 1.0]);
        for j in 0..3 {
            let first = vecs.column(j).iter().copied().find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
        assert_abs_diff_eq!(vecs[(1, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn generalized_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (vals, w) = generalized_sym_eigen(&a, &b).unwrap();
        assert!(vals[0] >= vals[1]);
        for j in 0..2 {
            let col = w.column(j);
            let lhs = &a * col;
            let rhs = &b * col * vals[j];
            assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!((col.transpose() * &b * col)[(0, 0)], 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn psd_projection_clamps() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let p = psd_projection(&m);
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_inverse_reports_ridge() {
        let m = DMatrix::zeros(2, 2);
        let err = ridge_inverse(&m, 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge"));
        assert!(ridge_inverse(&m, 1.0).is_ok());
    }
}
