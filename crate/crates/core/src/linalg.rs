//! Dense-matrix helpers shared by the certificate, plant and controller modules.
//!
//! Problem sizes here are tiny (2n <= ~12), so everything uses direct dense
//! algorithms: symmetric eigensolves for definiteness tests, the real Schur
//! form for general eigenvalues and LU for linear solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{fl, Scalar};

/// Relative tolerance for symmetry checks.
const SYM_TOL: f64 = 1e-12;

/// `true` when ||M - M^T|| <= 1e-12 * max(1, ||M||).
pub fn is_symmetric<T: Scalar>(m: &DMatrix<T>) -> bool {
    if !m.is_square() {
        return false;
    }
    let asym = (m - m.transpose()).norm();
    let scale = T::one().max(m.norm());
    asym <= fl::<T>(SYM_TOL) * scale
}

/// Eigenvalues of the symmetrized matrix (M + M^T)/2, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    let half = fl::<T>(0.5);
    let sym = (m + m.transpose()) * half;
    let mut ev: Vec<T> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN eigenvalue"));
    DVector::from_vec(ev)
}

/// Smallest eigenvalue of the symmetrized matrix.
pub fn lambda_min_sym<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)[0]
}

/// Checks that `m` is symmetric positive definite.
pub fn check_spd<T: Scalar>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    if !m.is_square() || !is_symmetric(m) {
        return Err(Error::NotSpd { what });
    }
    if lambda_min_sym(m) <= T::zero() {
        return Err(Error::NotSpd { what });
    }
    Ok(())
}

/// Largest real part over the (complex) eigenvalues of a square matrix.
pub fn max_re_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .reduce(|a, b| a.max(b))
        .expect("non-empty spectrum")
}

/// Errors unless all eigenvalues of `m` have strictly negative real part.
pub fn require_hurwitz<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    let max_re = max_re_eigenvalue(m);
    if max_re >= T::zero() {
        return Err(Error::NonHurwitz {
            max_re: max_re.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Kronecker product, used by the vectorized Lyapunov solve.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Condition number lambda_max/lambda_min of a symmetric PD matrix.
/// Returns +inf when the matrix is singular or indefinite.
pub fn cond_sym<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let ev = sym_eigenvalues(m);
    let lo = ev[0].to_f64().unwrap_or(f64::NAN);
    let hi = ev[ev.len() - 1].to_f64().unwrap_or(f64::NAN);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Copies `block` into `dst` with its top-left corner at `(row, col)`.
pub fn set_block<T: Scalar>(dst: &mut DMatrix<T>, row: usize, col: usize, block: &DMatrix<T>) {
    dst.view_mut((row, col), block.shape()).copy_from(block);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetry_check_tolerates_roundoff() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-15, 3.0]);
        assert!(is_symmetric(&m));
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 3.0]);
        assert!(!is_symmetric(&m));
    }

    #[test]
    fn hurwitz_rejects_marginal_eigenvalues() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(require_hurwitz(&a), Err(Error::NonHurwitz { .. })));
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -4.0]);
        assert!(require_hurwitz(&a).is_ok());
    }

    #[test]
    fn kron_identity() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let eye = DMatrix::<f64>::identity(2, 2);
        let k = kron(&eye, &a);
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(2, 2)], 1.0);
        assert_eq!(k[(0, 2)], 0.0);
        assert_eq!(k[(3, 2)], 3.0);
    }

    #[test]
    fn spd_check() {
        let d = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 1.0]);
        assert!(check_spd(&d, "D").is_ok());
        let neg = DMatrix::<f64>::from_row_slice(1, 1, &[-1.0]);
        assert!(matches!(check_spd(&neg, "K1"), Err(Error::NotSpd { .. })));
    }
}
