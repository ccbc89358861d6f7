use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{sample_period_ns, PdpSpec, PowerDelayProfile};
use crate::dncnn::{ModelShape, TrainConfig, TrainingSetConfig, YSource};
use crate::error::{Error, Result};
use crate::estimator::{Combiner, DEFAULT_MAX_CONDITION};
use crate::ofdm::{default_detection_symbols, FramePlan, QamConstellation};

const DESK_TOML: &str = include_str!("../../profiles/desk.toml");
const FULL_TOML: &str = include_str!("../../profiles/full.toml");

/// Channel estimator under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "blind")]
    Blind,
    #[serde(rename = "blind+dncnn")]
    BlindDncnn,
    #[serde(rename = "data_aided")]
    DataAided,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Blind,
        EstimatorKind::BlindDncnn,
        EstimatorKind::DataAided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Blind => "blind",
            EstimatorKind::BlindDncnn => "blind+dncnn",
            EstimatorKind::DataAided => "data_aided",
        }
    }

    /// Blind estimators detect the sounding symbols, so those carry data.
    pub fn is_blind(self) -> bool {
        self != EstimatorKind::DataAided
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "blind" => Ok(EstimatorKind::Blind),
            "blind+dncnn" | "blind_dncnn" => Ok(EstimatorKind::BlindDncnn),
            "data_aided" => Ok(EstimatorKind::DataAided),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected blind, blind+dncnn or data_aided)"
            ))),
        }
    }
}

/// Shipped configuration presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(Error::Config(format!(
                "unknown profile '{other}' (expected desk or full)"
            ))),
        }
    }
}

/// Denoiser architecture, training-set size and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSettings {
    pub weights: PathBuf,
    pub depth: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
    #[serde(default = "default_source")]
    pub source: YSource,
    /// SNR grid of the training set; empty means the experiment grid.
    #[serde(default)]
    pub train_snr_db: Vec<f64>,
    /// Antenna counts of the training set; empty means the experiment list.
    #[serde(default)]
    pub train_antennas: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_source() -> YSource {
    YSource::Simulated
}

fn default_spacing() -> f64 {
    15e3
}

fn default_max_condition() -> f64 {
    DEFAULT_MAX_CONDITION
}

fn default_workers() -> usize {
    0
}

/// Source of the tap powers behind the receiver's frequency covariance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverPdp {
    /// The configured profile.
    #[default]
    Nominal,
    /// Per frame and user, the tap powers averaged over the drawn antennas.
    Empirical,
}

/// Everything that defines an experiment. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_subcarriers: usize,
    pub n_users: usize,
    /// Antenna counts to sweep.
    pub antennas: Vec<usize>,
    pub constellation_order: usize,
    /// Cyclic prefix length; N/8 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_len: Option<usize>,
    #[serde(default = "default_spacing")]
    pub subcarrier_spacing_hz: f64,
    /// `etu` or the path of a profile file with `delays_ns` and `powers_db`.
    pub pdp: String,
    pub snr_db: Vec<f64>,
    pub frames_per_point: usize,
    pub estimators: Vec<EstimatorKind>,
    pub combiner: Combiner,
    /// Detection-phase length; `14 - P` (at least 1) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_symbols: Option<usize>,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Ceiling on the condition number of the pilot Gram matrix.
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
    /// Receiver's error on the noise variance, in dB (0 = perfect knowledge).
    #[serde(default)]
    pub noise_variance_offset_db: f64,
    /// Tap powers the receiver assumes when forming the frequency covariance.
    #[serde(default)]
    pub receiver_pdp: ReceiverPdp,
    pub denoiser: DenoiserSettings,
}

impl ExperimentConfig {
    pub fn profile(p: Profile) -> Self {
        let text = match p {
            Profile::Desk => DESK_TOML,
            Profile::Full => FULL_TOML,
        };
        Self::from_toml(text).expect("shipped profile is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !self.n_subcarriers.is_power_of_two() || self.n_subcarriers < 2 {
            return bad(format!(
                "n_subcarriers = {} must be a power of two >= 2",
                self.n_subcarriers
            ));
        }
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.antennas.is_empty() {
            return bad("antennas must list at least one antenna count".into());
        }
        if let Some(&m) = self.antennas.iter().find(|&&m| m <= self.n_users) {
            return bad(format!(
                "antenna count {m} must exceed n_users = {}",
                self.n_users
            ));
        }
        QamConstellation::new(self.constellation_order)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.cp_len() >= self.n_subcarriers {
            return bad(format!("cp_len = {} must be shorter than N", self.cp_len()));
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return bad("subcarrier_spacing_hz must be positive".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if self.frames_per_point == 0 {
            return bad("frames_per_point must be positive".into());
        }
        if self.estimators.is_empty() {
            return bad("estimators must not be empty".into());
        }
        if self.detection_symbols() == 0 {
            return bad("detection_symbols must be positive".into());
        }
        if !(self.max_condition > 1.0) {
            return bad("max_condition must exceed 1".into());
        }
        if !self.noise_variance_offset_db.is_finite() {
            return bad("noise_variance_offset_db must be finite".into());
        }
        let d = &self.denoiser;
        if d.depth < 2 || d.width == 0 {
            return bad(format!(
                "denoiser depth {} / width {} invalid",
                d.depth, d.width
            ));
        }
        if d.train.batch_size == 0 {
            return bad("denoiser.train.batch_size must be positive".into());
        }
        if d.train_antennas.iter().any(|&m| m <= 1) {
            return bad("denoiser.train_antennas entries must exceed 1".into());
        }
        Ok(())
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len.unwrap_or(self.n_subcarriers / 8)
    }

    pub fn detection_symbols(&self) -> usize {
        self.detection_symbols
            .unwrap_or_else(|| default_detection_symbols(self.n_users))
    }

    pub fn constellation(&self) -> Result<QamConstellation> {
        QamConstellation::new(self.constellation_order)
    }

    pub fn sample_period_ns(&self) -> f64 {
        sample_period_ns(self.n_subcarriers, self.subcarrier_spacing_hz)
    }

    /// The configured profile binned at the OFDM sample period.
    pub fn power_delay_profile(&self) -> Result<PowerDelayProfile> {
        let pdp = PdpSpec::resolve(&self.pdp)?.resample(self.sample_period_ns())?;
        if pdp.channel_len() > self.cp_len() {
            return Err(Error::ChannelTooLong {
                channel_len: pdp.channel_len(),
                cp_len: self.cp_len(),
            });
        }
        Ok(pdp)
    }

    pub fn frame_plan(&self, n_antennas: usize) -> Result<FramePlan> {
        FramePlan::new(
            self.n_subcarriers,
            self.n_users,
            n_antennas,
            self.cp_len(),
            self.detection_symbols(),
            &self.constellation()?,
        )
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.constellation_order.trailing_zeros() as usize
    }

    /// `E_b/N_0` in dB for a given SNR.
    pub fn ebn0_db(&self, snr_db: f64) -> f64 {
        snr_db - 10.0 * (self.bits_per_symbol() as f64).log10()
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            depth: self.denoiser.depth,
            width: self.denoiser.width,
            input_size: self.n_subcarriers,
        }
    }

    pub fn training_set_config(&self) -> Result<TrainingSetConfig> {
        let d = &self.denoiser;
        Ok(TrainingSetConfig {
            n_subcarriers: self.n_subcarriers,
            constellation: self.constellation()?,
            cp_len: self.cp_len(),
            pdp: self.power_delay_profile()?,
            snr_db: if d.train_snr_db.is_empty() {
                self.snr_db.clone()
            } else {
                d.train_snr_db.clone()
            },
            antennas: if d.train_antennas.is_empty() {
                self.antennas.clone()
            } else {
                d.train_antennas.clone()
            },
            source: d.source,
        })
    }

    pub fn needs_denoiser(&self) -> bool {
        self.estimators.contains(&EstimatorKind::BlindDncnn)
    }
}
