use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ml::ChannelEstimate;
use crate::channel::RxFrame;
use crate::error::{invalid, mismatch, Result};
use crate::numerics::linalg::inverse;
use crate::numerics::ComplexMatrix;
use crate::ofdm::FramePlan;

/// Per-subcarrier linear combiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Mf,
    Zf,
    Mmse,
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combiner::Mf => "mf",
            Combiner::Zf => "zf",
            Combiner::Mmse => "mmse",
        })
    }
}

impl FromStr for Combiner {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Combiner::Mf),
            "zf" => Ok(Combiner::Zf),
            "mmse" => Ok(Combiner::Mmse),
            other => Err(invalid(format!("unknown combiner '{other}'"))),
        }
    }
}

/// `P x M` combining matrix for the `M x P` channel `h`.
///
/// MF is `diag(1/|h_p|^2) H^H`, ZF `(H^H H)^{-1} H^H` and MMSE
/// `(H^H H + s^2 I)^{-1} H^H`. A singular Gram matrix under ZF falls back to
/// MMSE; the returned flag reports the fallback.
pub fn combining_matrix(
    h: &ComplexMatrix,
    combiner: Combiner,
    noise_variance: f64,
) -> (ComplexMatrix, bool) {
    let hh = h.adjoint();
    let p = h.cols();
    match combiner {
        Combiner::Mf => {
            let mut w = hh;
            for u in 0..p {
                let energy: f64 = (0..h.rows()).map(|m| h[(m, u)].norm_sqr()).sum();
                let s = if energy > 0.0 { 1.0 / energy } else { 0.0 };
                for m in 0..h.rows() {
                    w[(u, m)] *= s;
                }
            }
            (w, false)
        }
        Combiner::Zf | Combiner::Mmse => {
            let gram = hh.matmul(h).expect("conformant");
            let loaded = |s2: f64| {
                let mut g = gram.clone();
                for i in 0..p {
                    g[(i, i)] += s2;
                }
                g
            };
            if combiner == Combiner::Zf {
                if let Some(inv) =
                    inverse(&gram).filter(|m| m.as_slice().iter().all(|z| z.norm().is_finite()))
                {
                    return (inv.matmul(&hh).expect("conformant"), false);
                }
            }
            let fallback = combiner == Combiner::Zf;
            let inv = inverse(&loaded(noise_variance.max(f64::MIN_POSITIVE)))
                .unwrap_or_else(|| ComplexMatrix::zeros(p, p));
            (inv.matmul(&hh).expect("conformant"), fallback)
        }
    }
}

/// Detected symbols `[user][detection symbol][subcarrier]` and the number of
/// subcarriers where ZF had to fall back to MMSE.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub symbols: Vec<Vec<Vec<Complex64>>>,
    pub zf_fallbacks: usize,
}

/// Combines the detection-phase observations subcarrier by subcarrier.
pub fn linear_detect(
    plan: &FramePlan,
    rx: &RxFrame,
    est: &ChannelEstimate,
    combiner: Combiner,
    noise_variance: f64,
) -> Result<Detection> {
    if est.n_users() != plan.n_users {
        return Err(mismatch(
            format!("estimate for {} users", plan.n_users),
            est.n_users(),
        ));
    }
    if est.n_antennas() != rx.n_antennas() {
        return Err(mismatch(
            format!("{} antennas", rx.n_antennas()),
            est.n_antennas(),
        ));
    }
    let n = plan.n_subcarriers;
    let m_total = rx.n_antennas();
    let p_total = plan.n_users;
    let d_total = plan.n_detection_symbols;
    let mut symbols = vec![vec![vec![Complex64::new(0.0, 0.0); n]; d_total]; p_total];
    let mut zf_fallbacks = 0;
    let mut y = vec![Complex64::new(0.0, 0.0); m_total];
    for k in 0..n {
        let h = ComplexMatrix::from_fn(m_total, p_total, |m, p| est.gain(m, p, k));
        let (w, fell_back) = combining_matrix(&h, combiner, noise_variance);
        if fell_back {
            zf_fallbacks += 1;
            log::warn!("subcarrier {k}: singular ZF Gram matrix, using MMSE");
        }
        for d in 0..d_total {
            let slot = plan.n_users + d;
            for (m, ym) in y.iter_mut().enumerate() {
                *ym = rx.freq(m, slot)[k];
            }
            let x = w.matvec(&y)?;
            for p in 0..p_total {
                symbols[p][d][k] = x[p];
            }
        }
    }
    Ok(Detection {
        symbols,
        zf_fallbacks,
    })
}
