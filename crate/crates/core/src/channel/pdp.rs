use std::path::Path;

use serde::Deserialize;

use crate::error::{invalid, Error, Result};

const ETU_TOML: &str = include_str!("../../data/etu.toml");

/// A continuous-delay multipath profile as read from a profile file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PdpSpec {
    #[serde(default)]
    pub name: String,
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl PdpSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("power delay profile: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The shipped Extended Typical Urban profile.
    pub fn etu() -> Self {
        Self::from_toml(ETU_TOML).expect("shipped ETU profile parses")
    }

    /// Built-in name (`etu`) or a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match name_or_path.to_ascii_lowercase().as_str() {
            "etu" => Ok(Self::etu()),
            _ => Self::from_file(Path::new(name_or_path)),
        }
    }

    pub fn resample(&self, sample_period_ns: f64) -> Result<PowerDelayProfile> {
        resample_pdp(&self.delays_ns, &self.powers_db, sample_period_ns)
    }
}

/// Sample-spaced power delay profile with unit total power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    pub tap_delays_ns: Vec<f64>,
    pub tap_powers_db: Vec<f64>,
    pub sample_period_ns: f64,
    /// Per-bin linear power; sums to 1. Its length is the channel length L.
    pub rho: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn channel_len(&self) -> usize {
        self.rho.len()
    }

    /// Profile directly from per-bin linear powers (normalized to unit sum).
    pub fn from_rho(rho: &[f64]) -> Result<Self> {
        let total: f64 = rho.iter().sum();
        if rho.is_empty() || rho.iter().any(|&r| !(r >= 0.0)) || !(total > 0.0) {
            return Err(invalid(
                "tap powers must be non-negative with a positive sum",
            ));
        }
        Ok(Self {
            tap_delays_ns: (0..rho.len()).map(|l| l as f64).collect(),
            tap_powers_db: rho.iter().map(|r| 10.0 * r.log10()).collect(),
            sample_period_ns: 1.0,
            rho: rho.iter().map(|r| r / total).collect(),
        })
    }
}

/// Sample period for `n` subcarriers at `spacing_hz`.
pub fn sample_period_ns(n: usize, spacing_hz: f64) -> f64 {
    1e9 / (n as f64 * spacing_hz)
}

/// Bins each physical tap at sample resolution and normalizes to unit power.
///
/// A tap at delay `t` lands in bin `floor(t / Ts)`, the last sample instant not
/// after it. This is a nearest-sample approximation without fractional-delay
/// interpolation; the channel length is the highest occupied bin plus one.
pub fn resample_pdp(
    delays_ns: &[f64],
    powers_db: &[f64],
    sample_period_ns: f64,
) -> Result<PowerDelayProfile> {
    if delays_ns.is_empty() {
        return Err(invalid("power delay profile has no taps"));
    }
    if delays_ns.len() != powers_db.len() {
        return Err(invalid(format!(
            "{} delays but {} powers",
            delays_ns.len(),
            powers_db.len()
        )));
    }
    if !(sample_period_ns > 0.0) {
        return Err(invalid("sample period must be positive"));
    }
    if delays_ns.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(invalid("tap delays must be finite and non-negative"));
    }
    if delays_ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("tap delays must be sorted"));
    }
    if powers_db.iter().any(|p| !p.is_finite()) {
        return Err(invalid("tap powers must be finite"));
    }
    let bins: Vec<usize> = delays_ns
        .iter()
        .map(|&d| (d / sample_period_ns + 1e-9).floor() as usize)
        .collect();
    let len = bins.iter().max().copied().unwrap_or(0) + 1;
    let mut rho = vec![0.0; len];
    for (&b, &p) in bins.iter().zip(powers_db) {
        rho[b] += 10f64.powf(p / 10.0);
    }
    let total: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r /= total);
    Ok(PowerDelayProfile {
        tap_delays_ns: delays_ns.to_vec(),
        tap_powers_db: powers_db.to_vec(),
        sample_period_ns,
        rho,
    })
}
