use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, PlaneSet};
use super::model::{DenoiserModel, Gradients};
use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};
use crate::numerics::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment buffer per parameter group.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, group_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid("parameter groups do not match the optimizer state"));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(invalid("parameter group size changed"));
            }
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before the learning rate halves.
    pub patience: usize,
    /// Seed of the mini-batch shuffle.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            patience: 2,
            shuffle_seed: 0,
        }
    }
}

/// Loss history of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Validation loss before training (index 0) and after every epoch.
    pub val_loss: Vec<f64>,
    /// Mean training loss of every epoch.
    pub train_loss: Vec<f64>,
    /// Learning rate used in every epoch.
    pub lr: Vec<f64>,
    /// Index into `val_loss` of the returned weights.
    pub best_epoch: usize,
    /// Mean squared residual of the validation inputs, i.e. the loss of a
    /// network that predicts no noise.
    pub val_input_mse: f64,
    pub steps: u64,
}

impl TrainingReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    /// Best validation loss relative to the untouched input.
    pub fn val_ratio(&self) -> f64 {
        self.best_val_loss() / self.val_input_mse
    }
}

fn batch_tensors(set: &PlaneSet, idx: &[usize], n: usize) -> Result<(Tensor, Tensor)> {
    let hw = n * n;
    let mut x = Vec::with_capacity(idx.len() * hw);
    let mut t = Vec::with_capacity(idx.len() * hw);
    for &i in idx {
        let (noisy, clean) = (set.noisy(i), set.clean(i));
        x.extend_from_slice(noisy);
        t.extend(noisy.iter().zip(clean).map(|(a, b)| a - b));
    }
    Ok((
        Tensor::from_vec(1, idx.len(), n, n, x)?,
        Tensor::from_vec(1, idx.len(), n, n, t)?,
    ))
}

fn mse(pred: &Tensor, target: &Tensor) -> f64 {
    let s: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    s / pred.as_slice().len() as f64
}

/// Mean squared residual-prediction error over a plane set, inference mode.
pub fn evaluate_loss(model: &DenoiserModel, set: &PlaneSet, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(invalid("empty evaluation set"));
    }
    let n = set.size();
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, t) = batch_tensors(set, chunk, n)?;
        total += mse(&model.infer(&x)?, &t) * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Mean squared residual of the inputs themselves.
pub fn input_residual_mse(set: &PlaneSet) -> f64 {
    let s: f64 = (0..set.len())
        .map(|i| {
            set.noisy(i)
                .iter()
                .zip(set.clean(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    s / (set.len() * set.size() * set.size()).max(1) as f64
}

/// Trains the residual predictor with Adam on mean squared error and returns
/// the weights of the epoch with the lowest validation loss (epoch 0 being the
/// untrained model), rounded to `f32`.
pub fn train(
    mut model: DenoiserModel,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(DenoiserModel, TrainingReport)> {
    if cfg.batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(invalid("training and validation sets must be non-empty"));
    }
    let n = data.size();
    if n != model.input_size() {
        return Err(crate::error::mismatch(
            format!("{}x{} planes", model.input_size(), model.input_size()),
            n,
        ));
    }
    let sizes: Vec<usize> = model.param_groups_mut().iter().map(|g| g.len()).collect();
    let mut adam = Adam::new(cfg.adam, &sizes);
    let mut rng = SimRng::new(cfg.shuffle_seed);

    let val_input_mse = input_residual_mse(&data.val);
    let initial = evaluate_loss(&model, &data.val, cfg.batch_size)?;
    let mut report = TrainingReport {
        val_loss: vec![initial],
        train_loss: Vec::new(),
        lr: Vec::new(),
        best_epoch: 0,
        val_input_mse,
        steps: 0,
    };
    log::info!("epoch 0: val {initial:.4e} (input {val_input_mse:.4e})");
    let mut best = model.clone();
    let mut stale = 0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, t) = batch_tensors(&data.train, chunk, n)?;
            let (pred, cache) = model.forward_train(&x)?;
            let loss = mse(&pred, &t);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: adam.steps() as usize + 1,
                    detail: format!("epoch {epoch}, lr {:e}, batch {:?}", adam.config.lr, chunk),
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            let scale = 2.0 / pred.as_slice().len() as f64;
            let mut grad = pred;
            for (g, &tv) in grad.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *g = scale * (*g - tv);
            }
            let Gradients { groups } = model.backward(&cache, &grad)?;
            adam.step(model.param_groups_mut(), &groups)?;
        }
        let train_loss = epoch_loss / data.train.len() as f64;
        let val = evaluate_loss(&model, &data.val, cfg.batch_size)?;
        if !val.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: adam.steps() as usize,
                detail: format!("validation loss after epoch {epoch}"),
            });
        }
        report.train_loss.push(train_loss);
        report.lr.push(adam.config.lr);
        report.val_loss.push(val);
        log::info!(
            "epoch {epoch}: train {train_loss:.4e}, val {val:.4e} ({:.1}% of input), lr {:e}",
            100.0 * val / val_input_mse,
            adam.config.lr
        );
        if val < report.best_val_loss() {
            report.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience.max(1) {
                adam.config.lr *= 0.5;
                stale = 0;
            }
        }
    }
    report.steps = adam.steps();
    best.round_to_f32();
    Ok((best, report))
}
