use num_complex::Complex64;

use crate::error::{invalid, mismatch, Result};
use crate::numerics::{fft, ifft, ComplexMatrix, ComplexVector};

/// One OFDM symbol in both domains.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmSymbol {
    /// Subcarrier symbols, length N.
    pub freq: ComplexVector,
    /// `F^H freq` with the last `cp_len` samples prepended, length N + cp_len.
    pub time_with_cp: ComplexVector,
}

impl OfdmSymbol {
    pub fn cp_len(&self) -> usize {
        self.time_with_cp.len() - self.freq.len()
    }

    /// Time-domain body without the prefix.
    pub fn body(&self) -> &[Complex64] {
        &self.time_with_cp[self.cp_len()..]
    }
}

pub fn ofdm_modulate(d: &[Complex64], cp_len: usize) -> Result<OfdmSymbol> {
    let n = d.len();
    if cp_len >= n {
        return Err(invalid(format!(
            "cyclic prefix {cp_len} must be shorter than N = {n}"
        )));
    }
    let x = ifft(d)?;
    let mut time = Vec::with_capacity(n + cp_len);
    time.extend_from_slice(&x[n - cp_len..]);
    time.extend_from_slice(&x);
    Ok(OfdmSymbol {
        freq: ComplexVector::new(d.to_vec())?,
        time_with_cp: ComplexVector::from_vec_unchecked(time),
    })
}

/// Strips the cyclic prefix and applies the unitary DFT.
pub fn ofdm_demodulate(y: &[Complex64], n: usize, cp_len: usize) -> Result<ComplexVector> {
    if y.len() != n + cp_len {
        return Err(mismatch(
            format!("{} samples (N + cp)", n + cp_len),
            y.len(),
        ));
    }
    fft(&y[cp_len..])
}

/// First `taps` columns of `circ(x)`: `X[i,l] = x[(i - l) mod N]`, so `X h` is
/// the circular convolution of `x` with zero-padded `h`.
pub fn build_convolution_matrix(x: &[Complex64], taps: usize) -> Result<ComplexMatrix> {
    let n = x.len();
    if taps == 0 || taps > n {
        return Err(invalid(format!("tap count {taps} must be in 1..={n}")));
    }
    Ok(ComplexMatrix::from_fn(n, taps, |i, l| x[(i + n - l) % n]))
}
