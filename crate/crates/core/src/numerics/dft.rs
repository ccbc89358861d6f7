//! Unitary DFT in a single convention.
//!
//! Forward kernel `e^{-j 2 pi i k / N}` with symmetric `1/sqrt(N)` scaling, so
//! `F F^H = I`. Every module goes through these functions; mixing conventions
//! breaks the circulant diagonalization the blind estimator relies on.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::matrix::{ComplexMatrix, ComplexVector};
use crate::error::{invalid, Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// The `n x n` unitary DFT matrix `F[i,k] = e^{-j 2 pi i k / n} / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(invalid("DFT size must be at least 1"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n, n, |i, k| {
        // Reduce the exponent first so large i*k keeps full precision.
        let e = ((i * k) % n) as f64;
        Complex64::from_polar(scale, -2.0 * PI * e / n as f64)
    }))
}

fn transform(v: &[Complex64], direction: FftDirection) -> Result<ComplexVector> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut buf = v.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction).process(&mut buf));
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= scale);
    Ok(ComplexVector::from_vec_unchecked(buf))
}

/// `F v` for power-of-two lengths.
pub fn fft(v: &[Complex64]) -> Result<ComplexVector> {
    transform(v, FftDirection::Forward)
}

/// `F^H v` for power-of-two lengths.
pub fn ifft(v: &[Complex64]) -> Result<ComplexVector> {
    transform(v, FftDirection::Inverse)
}

/// Unnormalized forward DFT of `taps` zero-padded to `n` points:
/// `H[k] = sum_l taps[l] e^{-j 2 pi k l / n}`.
///
/// This is the per-subcarrier gain a cyclic-prefixed channel applies under the
/// unitary convention, i.e. `sqrt(n) * F * pad(taps)`.
pub fn frequency_response(taps: &[Complex64], n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            taps.iter()
                .enumerate()
                .map(|(l, &h)| {
                    h * Complex64::from_polar(1.0, -2.0 * PI * ((k * l) % n) as f64 / n as f64)
                })
                .sum()
        })
        .collect()
}

/// Circulant matrix with first column `c`: `M[i,j] = c[(i - j) mod n]`.
pub fn circulant(first_col: &[Complex64]) -> Result<ComplexMatrix> {
    let n = first_col.len();
    if n == 0 {
        return Err(invalid("circulant needs a non-empty first column"));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        first_col[(i + n - j) % n]
    }))
}
