//! Small dense linear-algebra helpers shared by the filter, smoother and
//! diagnostics. Matrices here are tiny (hidden dimensions of a handful), so
//! everything goes through nalgebra's dynamic types.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalue floor applied to covariances after every integration step.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Condition estimate above which an inversion is regularized.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Ridge added to the diagonal of an ill-conditioned matrix.
pub const RIDGE: f64 = 1e-10;
/// Most negative eigenvalue accepted for a "PSD" input.
pub const PSD_TOLERANCE: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes `m` and lifts every eigenvalue to at least `floor`.
pub fn clamp_psd(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    if m.nrows() == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(floor));
    }
    let s = symmetrize(m);
    let eig = SymmetricEigen::new(s.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return s;
    }
    let lifted = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&lifted) * v.transpose()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Ratio of the largest to smallest eigenvalue magnitude of a symmetric matrix.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return if m[(0, 0)] == 0.0 { f64::INFINITY } else { 1.0 };
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive (semi-)definite matrix.
///
/// When the condition estimate exceeds [`CONDITION_LIMIT`] (or the matrix is
/// singular) a ridge of [`RIDGE`] is added first. The flag reports whether the
/// ridge was applied. `None` means the matrix could not be inverted even
/// after regularization.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, bool)> {
    let n = m.nrows();
    if n == 1 {
        let v = m[(0, 0)];
        let (v, reg) = if v > 0.0 { (v, false) } else { (v + RIDGE, true) };
        if !(v > 0.0) || !v.is_finite() {
            return None;
        }
        return Some((DMatrix::from_element(1, 1, 1.0 / v), reg));
    }
    let sym = symmetrize(m);
    let (work, reg) = if condition_estimate(&sym) > CONDITION_LIMIT {
        (&sym + DMatrix::identity(n, n) * RIDGE, true)
    } else {
        (sym, false)
    };
    let inv = work.clone().cholesky().map(|c| c.inverse()).or_else(|| work.try_inverse())?;
    if inv.iter().all(|x| x.is_finite()) {
        Some((symmetrize(&inv), reg))
    } else {
        None
    }
}

/// Log-determinant of a symmetric positive-definite matrix. Eigenvalues are
/// floored at [`EIGEN_FLOOR`] so a momentarily singular covariance yields a
/// large negative value rather than `-inf`.
pub fn logdet_spd(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].max(EIGEN_FLOOR).ln();
    }
    if let Some(c) = m.clone().cholesky() {
        return 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().map(|l| l.max(EIGEN_FLOOR).ln()).sum()
}

/// Symmetric inverse square root `m^{-1/2}` of a positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let d = eig.eigenvalues.map(|l| l.sqrt().recip());
    let v = &eig.eigenvectors;
    Some(symmetrize(&(v * DMatrix::from_diagonal(&d) * v.transpose())))
}

pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Flips `v` so that its largest-magnitude component is positive.
pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Row-major flattening, the layout used by every on-disk matrix dump.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_lifts_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let c = clamp_psd(&m, 1e-12);
        assert!(min_eigenvalue(&c) >= 1e-12 - 1e-18);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_regularizes_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, reg) = spd_inverse(&m).unwrap();
        assert!(reg);
        assert!(inv.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let expected = (2.0_f64 * 1.0 - 0.25).ln();
        assert!((logdet_spd(&m) - expected).abs() < 1e-14);
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = inv_sqrt_spd(&m).unwrap();
        let prod = &s * &m * &s;
        assert!((prod - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn canonical_sign_makes_dominant_component_positive() {
        let v = canonical_sign(DVector::from_vec(vec![0.2, -0.9]));
        assert_eq!(v.as_slice(), &[-0.2, 0.9]);
    }
}
