use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, ExperimentConfig};

/// Normal-approximation 95% quantile.
const Z95: f64 = 1.96;

/// One row of results: an (estimator, SNR, M) operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub estimator: EstimatorKind,
    pub combiner: String,
    pub n_subcarriers: usize,
    pub n_users: usize,
    pub n_antennas: usize,
    pub constellation_order: usize,
    pub cp_len: usize,
    pub detection_symbols: usize,
    pub snr_db: f64,
    pub ebn0_db: f64,
    pub seed: u64,
    pub frames: usize,
    /// Frames where estimation failed; counted as all bits wrong.
    pub erasures: usize,
    /// `sum ||h_hat - h||^2 / sum ||h||^2` over non-erased frames.
    pub channel_mse: f64,
    /// 95% half-width from the per-frame normalized errors.
    pub channel_mse_ci: f64,
    /// Mean `|d_hat - d|^2` of the averaged virtual pilots (blind only).
    pub pilot_mse: f64,
    /// Virtual-pilot symbol decision error rate (blind only).
    pub pilot_ser: f64,
    pub ber_detection: f64,
    /// BER of the data carried by the sounding symbols (blind only).
    pub ber_sounding: f64,
    /// Detection-phase BER, plus the sounding phase for blind estimators.
    pub ber: f64,
    /// Sum-throughput in bits/s/Hz.
    pub throughput: f64,
    /// Subcarriers where ZF fell back to MMSE.
    pub zf_fallbacks: usize,
}

/// Column names in CSV order.
pub const CSV_COLUMNS: [&str; 22] = [
    "estimator",
    "combiner",
    "n_subcarriers",
    "n_users",
    "n_antennas",
    "constellation_order",
    "cp_len",
    "detection_symbols",
    "snr_db",
    "ebn0_db",
    "seed",
    "frames",
    "erasures",
    "channel_mse",
    "channel_mse_ci",
    "pilot_mse",
    "pilot_ser",
    "ber_detection",
    "ber_sounding",
    "ber",
    "throughput",
    "zf_fallbacks",
];

/// Sum-throughput `P log2(order) (1 - BER) useful / (P + D)`, where the
/// sounding symbols count as useful only for blind estimators.
pub fn compute_throughput(
    ber: f64,
    estimator: EstimatorKind,
    n_users: usize,
    detection_symbols: usize,
    constellation_order: usize,
) -> f64 {
    let bits = (constellation_order as f64).log2();
    let total = (n_users + detection_symbols) as f64;
    let useful = if estimator.is_blind() {
        total
    } else {
        detection_symbols as f64
    };
    n_users as f64 * bits * (1.0 - ber.clamp(0.0, 1.0)) * useful / total
}

/// What one simulated frame contributes to a record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameOutcome {
    pub erased: bool,
    pub error_energy: f64,
    pub channel_energy: f64,
    pub pilot_sq_error: f64,
    pub pilot_symbols: usize,
    pub pilot_errors: usize,
    pub detection_bit_errors: usize,
    pub detection_bits: usize,
    pub sounding_bit_errors: usize,
    pub sounding_bits: usize,
    pub zf_fallbacks: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Folds frame outcomes, in frame order, into a record.
pub fn reduce(
    cfg: &ExperimentConfig,
    estimator: EstimatorKind,
    snr_db: f64,
    n_antennas: usize,
    frames: &[FrameOutcome],
) -> MetricRecord {
    let mut err = 0.0;
    let mut energy = 0.0;
    let mut per_frame = Vec::with_capacity(frames.len());
    let mut pilot_sq = 0.0;
    let (mut pilot_n, mut pilot_err) = (0usize, 0usize);
    let (mut det_err, mut det_bits, mut snd_err, mut snd_bits) = (0usize, 0usize, 0usize, 0usize);
    let (mut erasures, mut fallbacks) = (0usize, 0usize);
    for f in frames {
        det_err += f.detection_bit_errors;
        det_bits += f.detection_bits;
        snd_err += f.sounding_bit_errors;
        snd_bits += f.sounding_bits;
        fallbacks += f.zf_fallbacks;
        if f.erased {
            erasures += 1;
            continue;
        }
        err += f.error_energy;
        energy += f.channel_energy;
        per_frame.push(ratio(f.error_energy, f.channel_energy));
        pilot_sq += f.pilot_sq_error;
        pilot_n += f.pilot_symbols;
        pilot_err += f.pilot_errors;
    }
    let n = per_frame.len() as f64;
    let ci = if per_frame.len() > 1 {
        let mean = per_frame.iter().sum::<f64>() / n;
        let var = per_frame
            .iter()
            .map(|r| (r - mean) * (r - mean))
            .sum::<f64>()
            / (n - 1.0);
        Z95 * (var / n).sqrt()
    } else {
        f64::NAN
    };
    let ber_detection = ratio(det_err as f64, det_bits as f64);
    let (ber_sounding, ber) = if estimator.is_blind() {
        (
            ratio(snd_err as f64, snd_bits as f64),
            ratio((det_err + snd_err) as f64, (det_bits + snd_bits) as f64),
        )
    } else {
        (f64::NAN, ber_detection)
    };
    let d = cfg.detection_symbols();
    MetricRecord {
        estimator,
        combiner: cfg.combiner.to_string(),
        n_subcarriers: cfg.n_subcarriers,
        n_users: cfg.n_users,
        n_antennas,
        constellation_order: cfg.constellation_order,
        cp_len: cfg.cp_len(),
        detection_symbols: d,
        snr_db,
        ebn0_db: cfg.ebn0_db(snr_db),
        seed: cfg.seed,
        frames: frames.len(),
        erasures,
        channel_mse: ratio(err, energy),
        channel_mse_ci: ci,
        pilot_mse: if estimator.is_blind() {
            ratio(pilot_sq, pilot_n as f64)
        } else {
            f64::NAN
        },
        pilot_ser: if estimator.is_blind() {
            ratio(pilot_err as f64, pilot_n as f64)
        } else {
            f64::NAN
        },
        ber_detection,
        ber_sounding,
        ber,
        throughput: compute_throughput(ber, estimator, cfg.n_users, d, cfg.constellation_order),
        zf_fallbacks: fallbacks,
    }
}
