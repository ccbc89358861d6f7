//! Blind virtual-pilot extraction, least-squares channel estimation and
//! linear detection.

mod covariance;
mod detect;
mod ml;

pub use covariance::{
    accumulate_covariance, average_virtual_pilots, build_chh_tilde, build_y_matrix,
    chh_tilde_from_rho, detect_virtual_pilots, extract_gq, subtract_noise_floor,
    CovarianceAccumulator, YMatrix, DIVISION_GUARD,
};
pub use detect::{combining_matrix, linear_detect, Combiner, Detection};
pub use ml::{data_aided_estimate, ml_channel_estimate, ChannelEstimate, DEFAULT_MAX_CONDITION};

use num_complex::Complex64;

use crate::channel::RxFrame;
use crate::error::Result;
use crate::numerics::ComplexMatrix;
use crate::ofdm::{FramePlan, QamConstellation};

/// Anything that can clean up a `Y` matrix before row averaging.
pub trait YDenoiser {
    fn denoise(&self, y: &ComplexMatrix) -> Result<ComplexMatrix>;
}

/// Output of the blind stage for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPilots {
    /// Row averages before the hard decision, `[user][subcarrier]`.
    pub raw: Vec<Vec<Complex64>>,
    /// Hard-decided pilots with the reference restored at subcarrier 0.
    pub detected: Vec<Vec<Complex64>>,
    /// The `Y` matrix of each user as fed to the averaging step (denoised
    /// when a denoiser ran).
    pub y: Vec<YMatrix>,
}

/// The receiver-side `Y` matrix for user `q` from its sounding slot.
pub fn y_matrix_for_user(
    rx: &RxFrame,
    user: usize,
    chh_tilde: &ComplexMatrix,
    noise_variance: f64,
    reference: Complex64,
) -> Result<YMatrix> {
    let r = accumulate_covariance((0..rx.n_antennas()).map(|m| rx.freq(m, user)))?;
    let r = subtract_noise_floor(&r, noise_variance)?;
    let g = extract_gq(&r, chh_tilde)?;
    build_y_matrix(&g, reference)
}

/// Runs the blind stage for all users.
///
/// `chh_tilde[q]` is the frequency covariance assumed for user `q` and
/// `noise_variance` the receiver's belief of `sigma^2`.
pub fn estimate_virtual_pilots(
    plan: &FramePlan,
    rx: &RxFrame,
    chh_tilde: &[ComplexMatrix],
    noise_variance: f64,
    constellation: &QamConstellation,
    denoiser: Option<&dyn YDenoiser>,
) -> Result<VirtualPilots> {
    let mut raw = Vec::with_capacity(plan.n_users);
    let mut detected = Vec::with_capacity(plan.n_users);
    let mut ys = Vec::with_capacity(plan.n_users);
    for q in 0..plan.n_users {
        let reference = plan.reference_symbols[q];
        let mut y = y_matrix_for_user(rx, q, &chh_tilde[q], noise_variance, reference)?;
        if let Some(dn) = denoiser {
            y.y = dn.denoise(&y.y)?;
        }
        let d_hat = average_virtual_pilots(&y.y, &y.valid)?;
        let mut pilots = detect_virtual_pilots(&d_hat, constellation);
        pilots[0] = reference;
        raw.push(d_hat);
        detected.push(pilots);
        ys.push(y);
    }
    Ok(VirtualPilots {
        raw,
        detected,
        y: ys,
    })
}
