use rayon::prelude::*;

use super::config::{EstimatorKind, ExperimentConfig, ReceiverPdp};
use super::metrics::{reduce, FrameOutcome, MetricRecord};
use crate::channel::{apply_uplink, draw_channel, ChannelRealization, PowerDelayProfile};
use crate::dncnn::DenoiserModel;
use crate::error::{Error, Result};
use crate::estimator::{
    build_chh_tilde, chh_tilde_from_rho, data_aided_estimate, estimate_virtual_pilots,
    linear_detect, ml_channel_estimate, YDenoiser,
};
use crate::numerics::{ComplexMatrix, SimRng};
use crate::ofdm::{qam_demodulate_hard, FramePlan, QamConstellation};

/// One (estimator, SNR, M) cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub n_antennas: usize,
}

/// Seed of frame `frame` at (M, SNR). The estimator is not part of the path,
/// so every estimator sees the same frames, channels and noise.
pub fn frame_rng(seed: u64, n_antennas: usize, snr_db: f64, frame: usize) -> SimRng {
    SimRng::derive(seed, &[n_antennas as u64, snr_db.to_bits(), frame as u64])
}

/// `sigma^2` for unit symbol energy and unit total channel power.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Per-point state shared by all frames.
struct PointSetup<'a> {
    cfg: &'a ExperimentConfig,
    point: OperatingPoint,
    plan: FramePlan,
    constellation: QamConstellation,
    pdp: PowerDelayProfile,
    chh_tilde: Vec<ComplexMatrix>,
    noise_variance: f64,
    assumed_noise_variance: f64,
    denoiser: Option<&'a DenoiserModel>,
}

impl<'a> PointSetup<'a> {
    fn new(
        cfg: &'a ExperimentConfig,
        point: OperatingPoint,
        denoiser: Option<&'a DenoiserModel>,
    ) -> Result<Self> {
        let constellation = cfg.constellation()?;
        let plan = cfg.frame_plan(point.n_antennas)?;
        let pdp = cfg.power_delay_profile()?;
        let chh = build_chh_tilde(&pdp, cfg.n_subcarriers)?;
        let denoiser = match point.estimator {
            EstimatorKind::BlindDncnn => Some(denoiser.ok_or_else(|| {
                Error::Config(format!(
                    "estimator blind+dncnn needs denoiser weights ({})",
                    cfg.denoiser.weights.display()
                ))
            })?),
            _ => None,
        };
        let nv = noise_variance(point.snr_db);
        Ok(Self {
            cfg,
            point,
            chh_tilde: vec![chh; cfg.n_users],
            plan,
            constellation,
            pdp,
            noise_variance: nv,
            assumed_noise_variance: nv * 10f64.powf(cfg.noise_variance_offset_db / 10.0),
            denoiser,
        })
    }

    fn frame(&self, index: usize) -> Result<FrameOutcome> {
        let (plan, c) = (&self.plan, &self.constellation);
        let mut rng = frame_rng(
            self.cfg.seed,
            self.point.n_antennas,
            self.point.snr_db,
            index,
        );
        let frame = plan.draw_frame(&mut rng, c)?;
        let ch = draw_channel(
            &mut rng,
            &self.pdp,
            plan.n_antennas,
            plan.n_users,
            self.noise_variance,
        );
        let rx = apply_uplink(plan, &frame, &ch, &mut rng)?;
        let l = self.pdp.channel_len();
        let k = c.bits_per_symbol();
        let n = plan.n_subcarriers;
        let blind = self.point.estimator.is_blind();
        let mut out = FrameOutcome {
            detection_bits: plan.n_users * plan.n_detection_symbols * n * k,
            sounding_bits: if blind { plan.n_users * (n - 1) * k } else { 0 },
            ..FrameOutcome::default()
        };

        let estimate = if blind {
            let dn = self.denoiser.map(|d| d as &dyn YDenoiser);
            let empirical;
            let chh_tilde = match self.cfg.receiver_pdp {
                ReceiverPdp::Nominal => &self.chh_tilde,
                ReceiverPdp::Empirical => {
                    empirical = empirical_chh_tilde(&ch, n)?;
                    &empirical
                }
            };
            estimate_virtual_pilots(plan, &rx, chh_tilde, self.assumed_noise_variance, c, dn)
                .and_then(|vp| {
                    for (q, user) in frame.users.iter().enumerate() {
                        for i in 1..n {
                            out.pilot_sq_error += (vp.raw[q][i] - user.sounding[i]).norm_sqr();
                            out.pilot_errors += usize::from(vp.detected[q][i] != user.sounding[i]);
                        }
                        out.pilot_symbols += n - 1;
                        let bits = qam_demodulate_hard(&vp.detected[q][1..], c);
                        out.sounding_bit_errors += bits
                            .iter()
                            .zip(&user.sounding_bits)
                            .filter(|(a, b)| a != b)
                            .count();
                    }
                    ml_channel_estimate(plan, &rx, &vp.detected, l, self.cfg.max_condition)
                })
        } else {
            data_aided_estimate(plan, &rx, &frame, l, self.cfg.max_condition)
        };
        let est = match estimate {
            Ok(est) => est,
            Err(
                e @ (Error::EstimationFailure(_)
                | Error::IllConditioned { .. }
                | Error::DegeneratePdp { .. }),
            ) => {
                log::debug!("frame {index} erased: {e}");
                return Ok(FrameOutcome {
                    erased: true,
                    detection_bit_errors: out.detection_bits,
                    sounding_bit_errors: out.sounding_bits,
                    ..out
                });
            }
            Err(e) => return Err(e),
        };
        for (a, b) in est.all_taps().iter().zip(ch.all_taps()) {
            out.error_energy += (a - b).norm_sqr();
            out.channel_energy += b.norm_sqr();
        }
        let det = linear_detect(
            plan,
            &rx,
            &est,
            self.cfg.combiner,
            self.assumed_noise_variance,
        )?;
        out.zf_fallbacks = det.zf_fallbacks;
        for (user, symbols) in frame.users.iter().zip(&det.symbols) {
            for (sent, got) in user.data_bits.iter().zip(symbols) {
                let bits = qam_demodulate_hard(got, c);
                out.detection_bit_errors += bits.iter().zip(sent).filter(|(a, b)| a != b).count();
            }
        }
        Ok(out)
    }
}

/// Frequency covariance of each user from its tap powers averaged over the
/// antennas of one realization.
fn empirical_chh_tilde(ch: &ChannelRealization, n: usize) -> Result<Vec<ComplexMatrix>> {
    let l = ch.channel_len();
    (0..ch.n_users())
        .map(|q| {
            let mut rho = vec![0.0; l];
            for m in 0..ch.n_antennas() {
                for (r, h) in rho.iter_mut().zip(ch.taps(m, q)) {
                    *r += h.norm_sqr();
                }
            }
            chh_tilde_from_rho(&rho, n)
        })
        .collect()
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

pub(crate) fn run_point_in(
    pool: &rayon::ThreadPool,
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    denoiser: Option<&DenoiserModel>,
) -> Result<MetricRecord> {
    let setup = PointSetup::new(cfg, point, denoiser)?;
    let outcomes: Vec<FrameOutcome> = pool.install(|| {
        (0..cfg.frames_per_point)
            .into_par_iter()
            .map(|f| setup.frame(f))
            .collect::<Result<_>>()
    })?;
    Ok(reduce(
        cfg,
        point.estimator,
        point.snr_db,
        point.n_antennas,
        &outcomes,
    ))
}

/// Simulates `frames_per_point` frames at one operating point on
/// `cfg.workers` threads. Frames are reduced in index order, so the record
/// does not depend on the number of workers.
pub fn run_point(
    cfg: &ExperimentConfig,
    point: OperatingPoint,
    denoiser: Option<&DenoiserModel>,
) -> Result<MetricRecord> {
    cfg.validate()?;
    run_point_in(&thread_pool(cfg.workers)?, cfg, point, denoiser)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Profile;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::profile(Profile::Desk);
        cfg.frames_per_point = 8;
        cfg.workers = 2;
        cfg
    }

    #[test]
    fn data_aided_noiseless_is_exact() {
        let cfg = small();
        let p = OperatingPoint {
            estimator: EstimatorKind::DataAided,
            snr_db: 400.0,
            n_antennas: 16,
        };
        let r = run_point(&cfg, p, None).unwrap();
        assert!(r.channel_mse < 1e-18, "{}", r.channel_mse);
        assert_eq!(r.ber, 0.0);
        assert!(r.pilot_mse.is_nan() && r.ber_sounding.is_nan());
    }

    #[test]
    fn same_seed_same_record() {
        let cfg = small();
        let p = OperatingPoint {
            estimator: EstimatorKind::Blind,
            snr_db: 5.0,
            n_antennas: 64,
        };
        let a = run_point(&cfg, p, None).unwrap();
        let mut one = cfg.clone();
        one.workers = 1;
        let b = run_point(&one, p, None).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.ber.is_finite() && (0.0..=1.0).contains(&a.ber));
    }

    #[test]
    fn empirical_receiver_pdp_runs() {
        let mut cfg = small();
        cfg.receiver_pdp = ReceiverPdp::Empirical;
        let p = OperatingPoint {
            estimator: EstimatorKind::Blind,
            snr_db: 10.0,
            n_antennas: 64,
        };
        let a = run_point(&cfg, p, None).unwrap();
        let b = run_point(&small(), p, None).unwrap();
        assert!(a.channel_mse.is_finite() && a.pilot_ser <= 0.05, "{a:?}");
        assert_ne!(a.pilot_mse, b.pilot_mse);
    }

    #[test]
    fn dncnn_without_weights_is_a_config_error() {
        let p = OperatingPoint {
            estimator: EstimatorKind::BlindDncnn,
            snr_db: 5.0,
            n_antennas: 64,
        };
        let err = run_point(&small(), p, None).unwrap_err();
        assert!(err.to_string().contains("denoiser-desk.bin"), "{err}");
    }
}
