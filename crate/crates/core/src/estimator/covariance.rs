//! Covariance averaging and the virtual-pilot algebra.
//!
//! For user `q`'s sounding slot the per-antenna DFT outputs are
//! `y_m = d_q (.) H_m + noise`, with `H_m` the unnormalized DFT of the CIR.
//! Averaging `y_m y_m^H` over antennas converges to `C (.) d_q d_q^H + s^2 I`,
//! where `C[i,j] = sum_l rho[l] e^{-j 2 pi (i-j) l / N}` is the frequency
//! covariance of the channel. Removing the noise floor and dividing by `C`
//! element-wise leaves `d_q d_q^H`; normalizing each column by its row-0
//! entry and the known `d_q[0]` turns every column into a copy of `d_q`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::PowerDelayProfile;
use crate::error::{invalid, mismatch, Error, Result};
use crate::numerics::ComplexMatrix;
use crate::ofdm::QamConstellation;

/// Relative guard for element-wise divisions.
pub const DIVISION_GUARD: f64 = 1e-9;

/// Running sum of `y y^H` over antennas.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    sum: ComplexMatrix,
    count: usize,
}

impl CovarianceAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            sum: ComplexMatrix::zeros(n, n),
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, y: &[Complex64]) -> Result<()> {
        let n = self.sum.rows();
        if y.len() != n {
            return Err(mismatch(format!("observation of length {n}"), y.len()));
        }
        let s = self.sum.as_mut_slice();
        for (i, &yi) in y.iter().enumerate() {
            let row = &mut s[i * n..(i + 1) * n];
            for (r, &yj) in row.iter_mut().zip(y) {
                *r += yi * yj.conj();
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Combines two partial sums (for parallel reductions over antennas).
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.sum.shape() != other.sum.shape() {
            return Err(mismatch(
                format!("{:?}", self.sum.shape()),
                format!("{:?}", other.sum.shape()),
            ));
        }
        for (a, b) in self.sum.as_mut_slice().iter_mut().zip(other.sum.as_slice()) {
            *a += b;
        }
        self.count += other.count;
        Ok(())
    }

    /// `R = (1/M) sum_m y_m y_m^H`.
    pub fn finalize(&self) -> Result<ComplexMatrix> {
        if self.count == 0 {
            return Err(invalid("covariance needs at least one antenna"));
        }
        Ok(self.sum.scale(1.0 / self.count as f64))
    }
}

/// Sample covariance of the DFT outputs of one sounding slot across antennas.
pub fn accumulate_covariance<'a, I>(observations: I) -> Result<ComplexMatrix>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut iter = observations.into_iter().peekable();
    let n = match iter.peek() {
        Some(first) => first.len(),
        None => return Err(invalid("covariance needs at least one antenna")),
    };
    if n == 0 {
        return Err(invalid("observations must be non-empty"));
    }
    let mut acc = CovarianceAccumulator::new(n);
    for y in iter {
        acc.add(y)?;
    }
    acc.finalize()
}

/// `R - sigma^2 I`.
pub fn subtract_noise_floor(r: &ComplexMatrix, noise_variance: f64) -> Result<ComplexMatrix> {
    if !(noise_variance >= 0.0) {
        return Err(invalid(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    let mut out = r.clone();
    for i in 0..out.rows().min(out.cols()) {
        out[(i, i)] -= noise_variance;
    }
    Ok(out)
}

/// Frequency-domain channel covariance `E{H H^H}` for per-tap powers `rho`:
/// the circulant `C[i,j] = sum_l rho[l] e^{-j 2 pi (i-j) l / N}`.
pub fn chh_tilde_from_rho(rho: &[f64], n: usize) -> Result<ComplexMatrix> {
    if rho.is_empty() || rho.len() > n {
        return Err(invalid(format!(
            "need 1..={n} tap powers, got {}",
            rho.len()
        )));
    }
    if !(rho.iter().sum::<f64>() > 0.0) {
        return Err(invalid("tap powers must have a positive sum"));
    }
    let col: Vec<Complex64> = (0..n)
        .map(|k| {
            rho.iter()
                .enumerate()
                .map(|(l, &r)| {
                    Complex64::from_polar(r, -2.0 * PI * ((k * l) % n) as f64 / n as f64)
                })
                .sum()
        })
        .collect();
    Ok(ComplexMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n]))
}

pub fn build_chh_tilde(pdp: &PowerDelayProfile, n: usize) -> Result<ComplexMatrix> {
    chh_tilde_from_rho(&pdp.rho, n)
}

/// `G[i,j] = R[i,j] / C[i,j]`.
pub fn extract_gq(r: &ComplexMatrix, chh_tilde: &ComplexMatrix) -> Result<ComplexMatrix> {
    if r.shape() != chh_tilde.shape() {
        return Err(mismatch(
            format!("{:?}", chh_tilde.shape()),
            format!("{:?}", r.shape()),
        ));
    }
    let guard = DIVISION_GUARD * chh_tilde.max_abs();
    let n = r.cols();
    let mut out = Vec::with_capacity(r.as_slice().len());
    for (idx, (&num, &den)) in r.as_slice().iter().zip(chh_tilde.as_slice()).enumerate() {
        let mag = den.norm();
        if !(mag > guard) {
            return Err(Error::DegeneratePdp {
                row: idx / n,
                col: idx % n,
                magnitude: mag,
                guard,
            });
        }
        out.push(num / den);
    }
    ComplexMatrix::from_vec(r.rows(), n, out)
}

/// The column-normalized matrix `Y[i,j] = d0 G[i,j] / G[0,j]` and the columns
/// whose pivot `G[0,j]` cleared the guard. Rejected columns are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct YMatrix {
    pub y: ComplexMatrix,
    pub valid: Vec<bool>,
}

impl YMatrix {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

pub fn build_y_matrix(g: &ComplexMatrix, reference: Complex64) -> Result<YMatrix> {
    let (rows, cols) = g.shape();
    let pivot_scale = g.row(0).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let guard = DIVISION_GUARD * pivot_scale;
    let valid: Vec<bool> = g
        .row(0)
        .iter()
        .map(|z| z.norm() > guard && z.norm().is_finite())
        .collect();
    let y = ComplexMatrix::from_fn(rows, cols, |i, j| {
        if valid[j] {
            reference * g[(i, j)] / g[(0, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(YMatrix { y, valid })
}

/// Row means of `Y` over the valid columns.
pub fn average_virtual_pilots(y: &ComplexMatrix, valid: &[bool]) -> Result<Vec<Complex64>> {
    if valid.len() != y.cols() {
        return Err(mismatch(format!("{} column flags", y.cols()), valid.len()));
    }
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::EstimationFailure(
            "no valid columns to average".into(),
        ));
    }
    Ok((0..y.rows())
        .map(|i| {
            y.row(i)
                .iter()
                .zip(valid)
                .filter(|(_, &v)| v)
                .map(|(z, _)| *z)
                .sum::<Complex64>()
                / count as f64
        })
        .collect())
}

/// Snaps raw estimates to the nearest constellation point.
pub fn detect_virtual_pilots(d_hat: &[Complex64], c: &QamConstellation) -> Vec<Complex64> {
    d_hat.iter().map(|&z| c.nearest_point(z)).collect()
}
