use std::path::Path;

use super::config::ExperimentConfig;
use crate::dncnn::{
    generate_training_set, load_weights_checked, save_weights, train, DenoiserModel, InputScaling,
    TrainingReport,
};
use crate::error::{Error, Result};
use crate::numerics::SimRng;

const DENOISER_STREAM: u64 = 0xD4C4;

/// Generates the training set, trains a fresh model and returns it with the
/// per-epoch report. Everything is derived from `cfg.seed`.
pub fn train_denoiser(cfg: &ExperimentConfig) -> Result<(DenoiserModel, TrainingReport)> {
    cfg.validate()?;
    let d = &cfg.denoiser;
    let set_cfg = cfg.training_set_config()?;
    let mut data_rng = SimRng::derive(cfg.seed, &[DENOISER_STREAM, 0]);
    let data = generate_training_set(&set_cfg, &mut data_rng, d.n_train, d.n_val)?;
    let mut init_rng = SimRng::derive(cfg.seed, &[DENOISER_STREAM, 1]);
    let model = DenoiserModel::new(
        d.depth,
        d.width,
        cfg.n_subcarriers,
        data.scaling,
        &mut init_rng,
    )?;
    log::info!(
        "training denoiser: depth {}, width {}, {} parameters",
        d.depth,
        d.width,
        model.n_params()
    );
    train(model, &data, &d.train)
}

/// Trains and writes the weights to `path`.
pub fn train_denoiser_to(cfg: &ExperimentConfig, path: &Path) -> Result<TrainingReport> {
    let (model, report) = train_denoiser(cfg)?;
    save_weights(&model, path)?;
    Ok(report)
}

/// Loads weights and checks them against the configured shape and
/// constellation.
pub fn load_denoiser(cfg: &ExperimentConfig, path: &Path) -> Result<DenoiserModel> {
    let model = load_weights_checked(path, cfg.model_shape())?;
    let expected = InputScaling::for_constellation(&cfg.constellation()?);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    if !(close(model.scaling.lo, expected.lo) && close(model.scaling.hi, expected.hi)) {
        return Err(Error::Config(format!(
            "{}: weights were trained for input range [{}, {}], the {}-QAM configuration needs [{}, {}]",
            path.display(),
            model.scaling.lo,
            model.scaling.hi,
            cfg.constellation_order,
            expected.lo,
            expected.hi
        )));
    }
    Ok(model)
}
