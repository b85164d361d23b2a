//! Small dense linear-algebra helpers shared by the asymptotic and inference code.

use nalgebra::{DMatrix, DVector};

use crate::error::{NlrError, Result};

/// Condition number above which a symmetric matrix is treated as singular.
pub const CONDITION_CEILING: f64 = 1e12;

/// `Jᵀ J` for an n×p Jacobian.
pub fn gram(jac: &DMatrix<f64>) -> DMatrix<f64> {
    jac.tr_mul(jac)
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn sym_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Condition number of a symmetric positive semi-definite matrix; `+inf` when singular.
pub fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let (min, max) = sym_eigen_extremes(m);
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix, rejecting ill-conditioned input.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = sym_condition(m);
    if !(condition <= CONDITION_CEILING) {
        return Err(NlrError::SingularDesign { condition });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or(NlrError::SingularDesign { condition })?;
    let inv = chol.inverse();
    // symmetrize away rounding
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Quadratic form `vᵀ A v`.
pub fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

/// Numerical rank from singular values above `rel_tol · max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_inverse_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&m).unwrap();
        let id = &m * &inv;
        assert!((id - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn singular_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spd_inverse(&m),
            Err(NlrError::SingularDesign { .. })
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn rank_of_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
    }
}
