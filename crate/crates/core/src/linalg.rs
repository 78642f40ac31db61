//! Small dense helpers on top of nalgebra: jittered Cholesky, Mahalanobis
//! norms and generalized eigenvalues of PSD pencils.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cholesky factorisation; on failure retries with `1e-10·scale·I` jitter,
/// growing tenfold, a few times.
pub fn cholesky<T: Scalar>(m: &DMatrix<T>) -> Result<Cholesky<T, Dyn>> {
    if !m.is_square() {
        return Err(Error::invalid("cholesky: matrix is not square"));
    }
    if m.iter().any(|x| !x.is_finite_value()) {
        return Err(Error::invalid("cholesky: matrix has non-finite entries"));
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(T::one(), |a, b| a.max(b));
    let mut jitter = T::lit(1e-10) * scale;
    for _ in 0..6 {
        let shifted = m + DMatrix::<T>::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
        jitter *= T::lit(10.0);
    }
    Err(Error::numerical(
        "cholesky",
        format!("matrix of size {n} is not positive definite"),
    ))
}

/// `xᵀ M x`.
pub fn quad_form<T: Scalar>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(m * x))
}

/// `xᵀ M⁻¹ x` from a Cholesky factor of `M`.
pub fn inv_quad_form<T: Scalar>(chol: &Cholesky<T, Dyn>, x: &DVector<T>) -> T {
    let mut y = x.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    // `l_dirty` keeps garbage above the diagonal, which the lower solve ignores.
    y.norm_squared()
}

pub fn log_det<T: Scalar>(chol: &Cholesky<T, Dyn>) -> T {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).fold(T::zero(), |a, b| a + b) * T::lit(2.0)
}

/// Symmetrises in place: `(M + Mᵀ)/2`.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut s = m.clone();
    symmetrize(&mut s);
    SymmetricEigen::new(s)
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |a, b| a.min(b))
}

/// Largest `λ` with `vᵀAv = λ vᵀBv` for `v` in the range of `B`.
///
/// Both matrices must be symmetric PSD and `range(A) ⊆ range(B)`; directions
/// where the eigenvalue of `B` is below `rel_tol·λ_max(B)` are discarded.
/// Returns 0 when `B` vanishes.
pub fn max_generalized_eigenvalue<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, rel_tol: T) -> T {
    let mut bs = b.clone();
    symmetrize(&mut bs);
    let eig = SymmetricEigen::new(bs);
    let top = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |acc, v| acc.max(v));
    if top <= T::zero() {
        return T::zero();
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > rel_tol * top)
        .collect();
    let n = a.nrows();
    let mut w = DMatrix::<T>::zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let scale = T::one() / eig.eigenvalues[i].sqrt();
        w.set_column(col, &(eig.eigenvectors.column(i) * scale));
    }
    let mut c = w.transpose() * a * &w;
    symmetrize(&mut c);
    SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |acc, v| acc.max(v))
}

/// Rank-one update `M += w · x xᵀ`.
pub fn add_outer<T: Scalar>(m: &mut DMatrix<T>, x: &DVector<T>, w: T) {
    m.ger(w, x, x, T::one());
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_quadratic_form_matches_explicit_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let chol = cholesky(&m).unwrap();
        let direct = quad_form(&m.clone().try_inverse().unwrap(), &x);
        assert_relative_eq!(inv_quad_form(&chol, &x), direct, epsilon = 1e-12);
        assert_relative_eq!(log_det(&chol), 11.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn jitter_rescues_singular_psd_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky(&m).is_ok());
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(cholesky(&neg).unwrap_err().is_numerical());
    }

    #[test]
    fn generalized_eigenvalue_of_scaled_pencil() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let a = &b * 3.0;
        assert_relative_eq!(max_generalized_eigenvalue(&a, &b, 1e-12), 3.0, epsilon = 1e-10);
        // rank-one pencil restricted to the shared range
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let b1 = &v * v.transpose();
        let a1 = &b1 * 0.25;
        assert_relative_eq!(max_generalized_eigenvalue(&a1, &b1, 1e-12), 0.25, epsilon = 1e-10);
    }
}
