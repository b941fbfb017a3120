//! Mini-batch training with per-epoch loss curves and best-snapshot retention.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_width, NeuralError, Result};
use crate::mlp::{MlpModel, Mode};
use crate::optim::{Adam, AdamConfig};

/// Rows per forward pass when scoring a whole dataset.
const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Weight on `Σ ||W||_F^2` in the loss.
    pub l2_coefficient: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a new best validation loss; 0 never stops early.
    pub patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::ce_default()
    }
}

impl TrainingConfig {
    pub fn ce_default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 80,
            l2_coefficient: 1e-5,
            epochs: 10,
            patience: 5,
            shuffle_seed: 0,
        }
    }

    pub fn sd_default() -> Self {
        Self { l2_coefficient: 1e-7, epochs: 20, ..Self::ce_default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NeuralError::Config("batch size and epoch count must be positive".into()));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return Err(NeuralError::Config(format!("invalid L2 coefficient {}", self.l2_coefficient)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch (training-mode normalization).
    pub train_loss: f64,
    /// Full validation loss after the epoch, inference mode, same objective.
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub steps: u64,
    pub stopped_early: bool,
}

impl TrainingReport {
    pub fn final_epoch(&self) -> &EpochLoss {
        self.curve.last().expect("at least one epoch")
    }
}

/// Loss of `model` over a whole dataset in inference mode.
pub fn evaluate(model: &MlpModel, data: &Dataset, alpha: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(NeuralError::Dimension { expected: 1, found: 0 });
    }
    let mut sse = 0.0;
    for (x, y) in data.inputs.axis_chunks_iter(Axis(0), EVAL_CHUNK).zip(data.labels.axis_chunks_iter(Axis(0), EVAL_CHUNK)) {
        let out = model.forward(x, Mode::Infer)?;
        check_width(out.ncols(), y.ncols())?;
        sse += ndarray::Zip::from(&out).and(&y).fold(0.0, |acc, o, l| acc + (o - l) * (o - l));
    }
    Ok(sse / data.len() as f64 + alpha * model.weight_norm_sqr())
}

/// One optimizer step on one mini-batch; returns the batch loss before the update.
pub fn train_step(
    model: &mut MlpModel,
    adam: &mut Adam,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<f64> {
    let step = model.step + 1;
    let (loss, grads) = model.loss_and_gradients(x, y, alpha, Mode::Train, false)?;
    let finite = loss.is_finite()
        && grads.weights.iter().all(|g| g.iter().all(|v| v.is_finite()))
        && grads.biases.iter().all(|g| g.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(NeuralError::Divergence { step, detail: format!("non-finite loss or gradient (loss = {loss})") });
    }
    model.update_running_stats(x)?;
    adam.step(model, &grads);
    if !model.is_finite() {
        return Err(NeuralError::Divergence { step, detail: "non-finite parameter after update".into() });
    }
    Ok(loss)
}

/// Train in place. On return `model` holds the snapshot with the lowest
/// validation loss seen at an epoch boundary.
pub fn train(model: &mut MlpModel, train_set: &Dataset, validation: &Dataset, config: &TrainingConfig) -> Result<TrainingReport> {
    config.validate()?;
    model.validate()?;
    let arch = model.architecture.clone();
    for ds in [train_set, validation] {
        check_width(arch.input_width(), ds.input_width())?;
        check_width(arch.output_width(), ds.label_width())?;
        if ds.is_empty() {
            return Err(NeuralError::Dimension { expected: 1, found: 0 });
        }
    }

    let alpha = config.l2_coefficient;
    let mut adam = Adam::new(model, config.adam)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ddst_core::rng::stream(config.shuffle_seed, 0);

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::with_capacity(config.epochs);
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            // A one-row batch has no usable batch statistics.
            if idx.len() < 2 && arch.input_batch_norm {
                continue;
            }
            let x = train_set.inputs.select(Axis(0), idx);
            let y = train_set.labels.select(Axis(0), idx);
            total += train_step(model, &mut adam, x.view(), y.view(), alpha)?;
            batches += 1;
        }
        let train_loss = total / batches.max(1) as f64;
        let validation_loss = evaluate(model, validation, alpha)?;
        if !validation_loss.is_finite() {
            return Err(NeuralError::Divergence { step: model.step, detail: "non-finite validation loss".into() });
        }
        curve.push(EpochLoss { epoch, train_loss, validation_loss });
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best_epoch = epoch;
            best = model.clone();
        } else if config.patience > 0 && epoch - best_epoch >= config.patience {
            stopped_early = epoch < config.epochs;
            break;
        }
    }

    let steps = model.step;
    *model = best;
    Ok(TrainingReport { curve, best_epoch, best_validation_loss: best_loss, steps, stopped_early })
}
