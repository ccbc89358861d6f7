//! Dense solvers over [`ComplexMatrix`], backed by nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{mismatch, Error, Result};

pub(crate) fn to_nalgebra(m: &ComplexMatrix) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub(crate) fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// 2-norm condition number `sigma_max / sigma_min` (infinite when rank deficient).
pub fn condition_number(m: &ComplexMatrix) -> f64 {
    let sv = to_nalgebra(m).singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Thin-QR least-squares solver for a tall matrix, factored once and reused
/// across right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q_adj: DMatrix<Complex64>,
    r: DMatrix<Complex64>,
    condition: f64,
}

impl LeastSquares {
    /// Factors `a` (rows >= cols); fails when the condition number of `a`
    /// exceeds `max_condition`. The normal matrix `a^H a` has the squared
    /// condition number.
    pub fn new(a: &ComplexMatrix, max_condition: f64) -> Result<Self> {
        if a.rows() < a.cols() {
            return Err(mismatch(format!("at least {} rows", a.cols()), a.rows()));
        }
        let condition = condition_number(a);
        if !(condition <= max_condition) {
            return Err(Error::IllConditioned {
                condition,
                limit: max_condition,
            });
        }
        let qr = to_nalgebra(a).qr();
        Ok(Self {
            q_adj: qr.q().adjoint(),
            r: qr.r(),
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.q_adj.ncols() {
            return Err(mismatch(
                format!("rhs of length {}", self.q_adj.ncols()),
                b.len(),
            ));
        }
        let qtb = &self.q_adj * DVector::from_column_slice(b);
        let x = self
            .r
            .solve_upper_triangular(&qtb)
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
                limit: self.condition,
            })?;
        Ok(x.iter().cloned().collect())
    }
}

/// Solves the square system `a x = b` by LU; `None` when `a` is singular.
pub fn solve_square(a: &ComplexMatrix, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let x = to_nalgebra(a).lu().solve(&DVector::from_column_slice(b))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    Some(x.iter().cloned().collect())
}

/// Inverse of a square matrix; `None` when singular.
pub fn inverse(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    to_nalgebra(a).try_inverse().map(|m| from_nalgebra(&m))
}
