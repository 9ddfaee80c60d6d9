//! Small dense linear algebra kernels: Cholesky factorization and solves for
//! the symmetric positive definite systems assembled by the heat and
//! quadratic-step solvers.

use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has length {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct Cholesky<F> {
    lower: Array2<F>,
}

impl<F: Scalar> Cholesky<F> {
    pub fn new(a: &Array2<F>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "cholesky requires a square matrix");
        let mut l = Array2::<F>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag = diag - l[[j, k]] * l[[j, k]];
            }
            if diag <= F::zero() || !diag.is_finite() {
                return Err(LinalgError::NotPositiveDefinite {
                    row: j,
                    pivot: diag.to_f64().unwrap_or(f64::NAN),
                });
            }
            let root = diag.sqrt();
            l[[j, j]] = root;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s = s - l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / root;
            }
        }
        Ok(Self { lower: l })
    }

    /// Solve `A x = b` using the stored factor.
    pub fn solve(&self, b: &Array1<F>) -> Result<Array1<F>, LinalgError> {
        let n = self.lower.nrows();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                rows: n,
                cols: n,
                len: b.len(),
            });
        }
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.lower[[i, k]] * y[k];
            }
            y[i] = s / self.lower[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.lower[[k, i]] * y[k];
            }
            y[i] = s / self.lower[[i, i]];
        }
        Ok(y)
    }
}

/// Solve the SPD system `A x = b` directly.
pub fn solve_spd<F: Scalar>(a: &Array2<F>, b: &Array1<F>) -> Result<Array1<F>, LinalgError> {
    Cholesky::new(a)?.solve(b)
}

/// Explicit inverse of an SPD matrix, column by column.
pub fn invert_spd<F: Scalar>(a: &Array2<F>) -> Result<Array2<F>, LinalgError> {
    let n = a.nrows();
    let chol = Cholesky::new(a)?;
    let mut inv = Array2::<F>::zeros((n, n));
    let mut e = Array1::<F>::zeros(n);
    for j in 0..n {
        e[j] = F::one();
        let col = chol.solve(&e)?;
        inv.column_mut(j).assign(&col);
        e[j] = F::zero();
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a: Array2<f64> = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x_true: Array1<f64> = array![1.0, -2.0, 0.5];
        let b = a.dot(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a: Array2<f64> = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::new(&a).is_err());
    }

    #[test]
    fn inverse_matches_solve() {
        let a: Array2<f64> = array![[2.0, 0.5], [0.5, 1.0]];
        let inv = invert_spd(&a).unwrap();
        let prod = a.dot(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[[i, j]] - expect).abs() < 1e-13);
            }
        }
    }
}
