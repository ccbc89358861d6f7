use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::model::InputScaling;
use crate::channel::{apply_uplink, draw_channel, PowerDelayProfile};
use crate::error::{invalid, Result};
use crate::estimator::{build_chh_tilde, build_y_matrix, extract_gq, y_matrix_for_user, YMatrix};
use crate::numerics::{ComplexMatrix, SimRng};
use crate::ofdm::{FramePlan, QamConstellation};

const TRAIN_STREAM: u64 = 1;
const VAL_STREAM: u64 = 2;
const QUEUE_DEPTH: usize = 32;

/// How training `Y` matrices are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YSource {
    /// Full uplink simulation of the sounding slot.
    Simulated,
    /// Noiseless infinite-antenna limit, `R = C (.) d d^H`.
    Asymptotic,
}

/// Operating conditions the training `Y` matrices are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSetConfig {
    pub n_subcarriers: usize,
    pub constellation: QamConstellation,
    pub cp_len: usize,
    pub pdp: PowerDelayProfile,
    pub snr_db: Vec<f64>,
    pub antennas: Vec<usize>,
    pub source: YSource,
}

impl TrainingSetConfig {
    pub fn scaling(&self) -> InputScaling {
        InputScaling::for_constellation(&self.constellation)
    }
}

/// One simulated `Y` matrix with the sounding symbol it hides.
#[derive(Debug, Clone)]
pub struct YSample {
    pub y: YMatrix,
    pub symbols: Vec<Complex64>,
    pub snr_db: f64,
    pub n_antennas: usize,
}

impl YSample {
    /// Noise-free counterpart: every valid column equals the sounding symbol.
    pub fn clean(&self) -> ComplexMatrix {
        let n = self.symbols.len();
        ComplexMatrix::from_fn(n, n, |i, j| {
            if self.y.valid[j] {
                self.symbols[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Draws the operating point and one single-user sounding slot from `rng`.
pub fn draw_y_sample(
    cfg: &TrainingSetConfig,
    chh_tilde: &ComplexMatrix,
    rng: &mut SimRng,
) -> Result<YSample> {
    if cfg.snr_db.is_empty() || cfg.antennas.is_empty() {
        return Err(invalid(
            "training grid needs at least one SNR and one antenna count",
        ));
    }
    let snr_db = cfg.snr_db[rng.below(cfg.snr_db.len())];
    let n_antennas = cfg.antennas[rng.below(cfg.antennas.len())];
    let quadrant = rng.below(4);
    let c = &cfg.constellation;
    let mut plan = FramePlan::new(cfg.n_subcarriers, 1, n_antennas, cfg.cp_len, 1, c)?;
    let reference = c.corner(quadrant);
    plan.reference_symbols[0] = reference;
    let frame = plan.draw_frame(rng, c)?;
    let symbols = frame.users[0].sounding.clone();
    let y = match cfg.source {
        YSource::Simulated => {
            let noise_variance = 10f64.powf(-snr_db / 10.0);
            let ch = draw_channel(rng, &cfg.pdp, n_antennas, 1, noise_variance);
            let rx = apply_uplink(&plan, &frame, &ch, rng)?;
            y_matrix_for_user(&rx, 0, chh_tilde, noise_variance, reference)?
        }
        YSource::Asymptotic => {
            let r = chh_tilde.hadamard(&ComplexMatrix::outer(&symbols, &symbols))?;
            build_y_matrix(&extract_gq(&r, chh_tilde)?, reference)?
        }
    };
    Ok(YSample {
        y,
        symbols,
        snr_db,
        n_antennas,
    })
}

/// Scaled real (`part = 0`) or imaginary (`part = 1`) plane, row-major.
pub fn scaled_plane(m: &ComplexMatrix, part: usize, scaling: &InputScaling) -> Vec<f64> {
    m.as_slice()
        .iter()
        .map(|z| scaling.scale(if part == 0 { z.re } else { z.im }))
        .collect()
}

/// Noisy/clean plane pairs of one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaneSet {
    size: usize,
    noisy: Vec<f64>,
    clean: Vec<f64>,
}

impl PlaneSet {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }

    pub fn push(&mut self, noisy: &[f64], clean: &[f64]) -> Result<()> {
        let hw = self.size * self.size;
        if noisy.len() != hw || clean.len() != hw {
            return Err(crate::error::mismatch(
                format!("{hw} values"),
                format!("{}/{}", noisy.len(), clean.len()),
            ));
        }
        self.noisy.extend_from_slice(noisy);
        self.clean.extend_from_slice(clean);
        Ok(())
    }

    /// Side length of the square planes.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        if self.size == 0 {
            0
        } else {
            self.noisy.len() / (self.size * self.size)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn noisy(&self, i: usize) -> &[f64] {
        let hw = self.size * self.size;
        &self.noisy[i * hw..(i + 1) * hw]
    }

    pub fn clean(&self, i: usize) -> &[f64] {
        let hw = self.size * self.size;
        &self.clean[i * hw..(i + 1) * hw]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scaling: InputScaling,
    pub train: PlaneSet,
    pub val: PlaneSet,
}

impl Dataset {
    pub fn size(&self) -> usize {
        self.train.size()
    }
}

/// Seed of the `index`-th `Y` matrix of a split.
fn sample_rng(base: u64, stream: u64, index: usize) -> SimRng {
    SimRng::derive(base, &[stream, index as u64])
}

/// Sample `i` of a split is plane `i % 2` of `Y` matrix `i / 2`.
///
/// A producer thread simulates `Y` matrices in index order and hands them to
/// the caller through a bounded queue, blocking while the queue is full.
fn generate_split(
    cfg: &TrainingSetConfig,
    chh_tilde: &ComplexMatrix,
    base: u64,
    stream: u64,
    n_samples: usize,
) -> Result<PlaneSet> {
    let n = cfg.n_subcarriers;
    let scaling = cfg.scaling();
    let n_y = n_samples.div_ceil(2);
    let mut set = PlaneSet::new(n);
    std::thread::scope(|s| -> Result<()> {
        let (tx, rx) = crossbeam_channel::bounded(QUEUE_DEPTH);
        s.spawn(move || {
            for j in 0..n_y {
                let sample = draw_y_sample(cfg, chh_tilde, &mut sample_rng(base, stream, j));
                let stop = sample.is_err();
                if tx.send((j, sample)).is_err() || stop {
                    break;
                }
            }
        });
        for (j, sample) in rx {
            let sample = sample?;
            let clean = sample.clean();
            for part in 0..2 {
                if 2 * j + part < n_samples {
                    set.push(
                        &scaled_plane(&sample.y.y, part, &scaling),
                        &scaled_plane(&clean, part, &scaling),
                    )?;
                }
            }
        }
        Ok(())
    })?;
    Ok(set)
}

/// Builds disjoint training and validation plane sets. The two splits draw
/// from separate seed streams derived from one value taken from `rng`.
pub fn generate_training_set(
    cfg: &TrainingSetConfig,
    rng: &mut SimRng,
    n_train: usize,
    n_val: usize,
) -> Result<Dataset> {
    let base = rng.next_u64();
    let chh_tilde = build_chh_tilde(&cfg.pdp, cfg.n_subcarriers)?;
    log::info!("generating {n_train} training and {n_val} validation planes");
    let train = generate_split(cfg, &chh_tilde, base, TRAIN_STREAM, n_train)?;
    let val = generate_split(cfg, &chh_tilde, base, VAL_STREAM, n_val)?;
    Ok(Dataset {
        scaling: cfg.scaling(),
        train,
        val,
    })
}

/// The `Y` matrix behind sample `index` of the training (`validation =
/// false`) or validation split, for cross-checks against the pipeline.
pub fn regenerate_y_sample(
    cfg: &TrainingSetConfig,
    base_seed: u64,
    validation: bool,
    index: usize,
) -> Result<YSample> {
    let chh_tilde = build_chh_tilde(&cfg.pdp, cfg.n_subcarriers)?;
    let stream = if validation { VAL_STREAM } else { TRAIN_STREAM };
    draw_y_sample(
        cfg,
        &chh_tilde,
        &mut sample_rng(base_seed, stream, index / 2),
    )
}
