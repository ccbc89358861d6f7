use num_complex::Complex64;

use crate::channel::RxFrame;
use crate::error::{mismatch, Error, Result};
use crate::numerics::linalg::LeastSquares;
use crate::numerics::{frequency_response, ifft};
use crate::ofdm::{build_convolution_matrix, FramePlan, TxFrame};

/// Default ceiling on `cond(X^H X)` for the pilot convolution matrix.
pub const DEFAULT_MAX_CONDITION: f64 = 1e10;

/// Estimated CIRs for all links plus their subcarrier responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    n_antennas: usize,
    n_users: usize,
    channel_len: usize,
    n_subcarriers: usize,
    /// `[antenna][user][tap]`.
    taps: Vec<Complex64>,
    /// `[antenna][user][subcarrier]`, unnormalized DFT of the zero-padded taps.
    freq: Vec<Complex64>,
}

impl ChannelEstimate {
    pub fn from_taps(
        n_antennas: usize,
        n_users: usize,
        channel_len: usize,
        n_subcarriers: usize,
        taps: Vec<Complex64>,
    ) -> Result<Self> {
        if taps.len() != n_antennas * n_users * channel_len {
            return Err(mismatch(n_antennas * n_users * channel_len, taps.len()));
        }
        let freq = taps
            .chunks(channel_len)
            .flat_map(|h| frequency_response(h, n_subcarriers))
            .collect();
        Ok(Self {
            n_antennas,
            n_users,
            channel_len,
            n_subcarriers,
            taps,
            freq,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn channel_len(&self) -> usize {
        self.channel_len
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn taps(&self, antenna: usize, user: usize) -> &[Complex64] {
        let s = (antenna * self.n_users + user) * self.channel_len;
        &self.taps[s..s + self.channel_len]
    }

    pub fn all_taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn response(&self, antenna: usize, user: usize) -> &[Complex64] {
        let s = (antenna * self.n_users + user) * self.n_subcarriers;
        &self.freq[s..s + self.n_subcarriers]
    }

    /// Gain of link (antenna, user) on subcarrier `k`.
    pub fn gain(&self, antenna: usize, user: usize, k: usize) -> Complex64 {
        self.freq[(antenna * self.n_users + user) * self.n_subcarriers + k]
    }
}

/// Least-squares CIR estimate from the sounding phase.
///
/// The stacked model `r_m = X h_m + n_m` with `X = [X_0 .. X_{P-1}]` is solved
/// in the least-squares sense, `h_m = (X^H X)^{-1} X^H r_m`. Round-robin
/// sounding makes `X^H X` block diagonal, so each user's `X_q` (the first L
/// columns of `circ(F^H pilot_q)`) is factored once by thin QR and applied
/// to the slot-`q` samples of every antenna. `max_condition` bounds
/// `cond(X_q^H X_q)`.
pub fn ml_channel_estimate(
    plan: &FramePlan,
    rx: &RxFrame,
    pilots: &[Vec<Complex64>],
    channel_len: usize,
    max_condition: f64,
) -> Result<ChannelEstimate> {
    if pilots.len() != plan.n_users {
        return Err(mismatch(
            format!("{} pilot vectors", plan.n_users),
            pilots.len(),
        ));
    }
    let n_antennas = rx.n_antennas();
    let mut taps = vec![Complex64::new(0.0, 0.0); n_antennas * plan.n_users * channel_len];
    for (q, pilot) in pilots.iter().enumerate() {
        if pilot.len() != plan.n_subcarriers {
            return Err(mismatch(plan.n_subcarriers, pilot.len()));
        }
        let x = ifft(pilot)?;
        let xq = build_convolution_matrix(&x, channel_len)?;
        // cond(X^H X) = cond(X)^2
        let ls = LeastSquares::new(&xq, max_condition.sqrt()).map_err(|e| match e {
            Error::IllConditioned { condition, .. } => Error::IllConditioned {
                condition: condition * condition,
                limit: max_condition,
            },
            other => other,
        })?;
        for m in 0..n_antennas {
            let h = ls.solve(rx.time(m, q))?;
            let s = (m * plan.n_users + q) * channel_len;
            taps[s..s + channel_len].copy_from_slice(&h);
        }
    }
    ChannelEstimate::from_taps(
        n_antennas,
        plan.n_users,
        channel_len,
        plan.n_subcarriers,
        taps,
    )
}

/// Benchmark: the same estimator fed the true sounding symbols.
pub fn data_aided_estimate(
    plan: &FramePlan,
    rx: &RxFrame,
    frame: &TxFrame,
    channel_len: usize,
    max_condition: f64,
) -> Result<ChannelEstimate> {
    let pilots: Vec<Vec<Complex64>> = frame.users.iter().map(|u| u.sounding.clone()).collect();
    ml_channel_estimate(plan, rx, &pilots, channel_len, max_condition)
}
