//! Tapped-delay-line Rayleigh channels and uplink reception.

mod pdp;

pub use pdp::{resample_pdp, sample_period_ns, PdpSpec, PowerDelayProfile};

use num_complex::Complex64;

use crate::error::{mismatch, Result};
use crate::numerics::{fft, fill_cgauss, SimRng};
use crate::ofdm::{ofdm_modulate, FramePlan, TxFrame};

/// Channel impulse responses for every (antenna, user) pair, static over a
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_antennas: usize,
    n_users: usize,
    /// `[antenna][user][tap]`, flattened.
    taps: Vec<Complex64>,
    pub pdp: PowerDelayProfile,
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn from_taps(
        n_antennas: usize,
        n_users: usize,
        taps: Vec<Complex64>,
        pdp: PowerDelayProfile,
        noise_variance: f64,
    ) -> Result<Self> {
        let want = n_antennas * n_users * pdp.channel_len();
        if taps.len() != want {
            return Err(mismatch(format!("{want} taps"), taps.len()));
        }
        Ok(Self {
            n_antennas,
            n_users,
            taps,
            pdp,
            noise_variance,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn channel_len(&self) -> usize {
        self.pdp.channel_len()
    }

    /// CIR `h_{m,p}` of length L.
    pub fn taps(&self, antenna: usize, user: usize) -> &[Complex64] {
        let l = self.channel_len();
        let start = (antenna * self.n_users + user) * l;
        &self.taps[start..start + l]
    }

    pub fn all_taps(&self) -> &[Complex64] {
        &self.taps
    }
}

/// Draws i.i.d. `CN(0, rho[l])` taps for each of `M x P` links, antenna-major.
pub fn draw_channel(
    rng: &mut SimRng,
    pdp: &PowerDelayProfile,
    n_antennas: usize,
    n_users: usize,
    noise_variance: f64,
) -> ChannelRealization {
    let l = pdp.channel_len();
    let mut taps = Vec::with_capacity(n_antennas * n_users * l);
    for _ in 0..n_antennas * n_users {
        for &r in &pdp.rho {
            fill_cgauss(rng, r, &mut taps, 1);
        }
    }
    ChannelRealization {
        n_antennas,
        n_users,
        taps,
        pdp: pdp.clone(),
        noise_variance,
    }
}

/// Received samples of one frame after CP removal, in both domains.
#[derive(Debug, Clone)]
pub struct RxFrame {
    n_subcarriers: usize,
    n_slots: usize,
    /// `[antenna][slot][sample]`, flattened.
    time: Vec<Complex64>,
    freq: Vec<Complex64>,
}

impl RxFrame {
    pub fn n_antennas(&self) -> usize {
        self.time.len() / (self.n_slots * self.n_subcarriers)
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    fn range(&self, antenna: usize, slot: usize) -> std::ops::Range<usize> {
        let start = (antenna * self.n_slots + slot) * self.n_subcarriers;
        start..start + self.n_subcarriers
    }

    /// Time-domain `r_m` of `slot` with the prefix removed.
    pub fn time(&self, antenna: usize, slot: usize) -> &[Complex64] {
        &self.time[self.range(antenna, slot)]
    }

    /// `F r_m` of `slot`.
    pub fn freq(&self, antenna: usize, slot: usize) -> &[Complex64] {
        &self.freq[self.range(antenna, slot)]
    }
}

/// Passes every user's frame through its channel to every antenna, adds
/// `CN(0, sigma^2)` noise per sample and strips the cyclic prefixes.
///
/// Symbols are convolved as one continuous stream, so the previous symbol's
/// tail spills into the next prefix exactly as on air.
pub fn apply_uplink(
    plan: &FramePlan,
    frame: &TxFrame,
    ch: &ChannelRealization,
    rng: &mut SimRng,
) -> Result<RxFrame> {
    plan.check_channel_len(ch.channel_len())?;
    if ch.n_users() != plan.n_users || frame.users.len() != plan.n_users {
        return Err(mismatch(
            format!("{} users", plan.n_users),
            format!("channel {} / frame {}", ch.n_users(), frame.users.len()),
        ));
    }
    let n = plan.n_subcarriers;
    let sym_len = plan.symbol_len();
    let n_slots = plan.n_slots();
    let stream_len = n_slots * sym_len;

    let mut streams = Vec::with_capacity(plan.n_users);
    for p in 0..plan.n_users {
        let mut s = vec![Complex64::new(0.0, 0.0); stream_len];
        for slot in 0..n_slots {
            if let Some(d) = frame.symbol(plan, p, slot) {
                let sym = ofdm_modulate(d, plan.cp_len)?;
                s[slot * sym_len..(slot + 1) * sym_len].copy_from_slice(&sym.time_with_cp);
            }
        }
        streams.push(s);
    }

    let m_total = ch.n_antennas();
    let mut time = Vec::with_capacity(m_total * n_slots * n);
    let mut freq = Vec::with_capacity(m_total * n_slots * n);
    let mut rx = Vec::with_capacity(stream_len);
    for m in 0..m_total {
        rx.clear();
        fill_cgauss(rng, ch.noise_variance, &mut rx, stream_len);
        for (p, s) in streams.iter().enumerate() {
            let h = ch.taps(m, p);
            for (i, out) in rx.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (l, &hl) in h.iter().enumerate().take(i + 1) {
                    acc += hl * s[i - l];
                }
                *out += acc;
            }
        }
        for slot in 0..n_slots {
            let body = &rx[slot * sym_len + plan.cp_len..(slot + 1) * sym_len];
            time.extend_from_slice(body);
            freq.extend_from_slice(&fft(body)?);
        }
    }
    Ok(RxFrame {
        n_subcarriers: n,
        n_slots,
        time,
        freq,
    })
}
