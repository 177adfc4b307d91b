use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::loss::{cross_entropy_grad, LossGrad};
use super::model::{Logits, Model};
use super::optim::{Optimizer, OptimizerKind};
use crate::data::LabeledDataset;
use crate::error::{KdError, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::pretraining()
    }
}

impl TrainConfig {
    /// Adam 1e-3, weight decay 4e-4, batch 32, up to 100 epochs, patience 10.
    pub fn pretraining() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            weight_decay: 4e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            momentum: 0.0,
        }
    }

    /// Plain SGD 0.01, weight decay 4e-4, no momentum, for federated local steps.
    pub fn federated_local() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.01,
            weight_decay: 4e-4,
            batch_size: 32,
            max_epochs: 2,
            patience: 2,
            momentum: 0.0,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            errs.push(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            errs.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be at least 1".into());
        }
        if self.patience > self.max_epochs {
            errs.push(format!(
                "patience ({}) must not exceed max_epochs ({})",
                self.patience, self.max_epochs
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            errs.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        errs
    }

    pub fn optimizer_for(&self, model: &Model) -> Optimizer {
        Optimizer::new(
            self.optimizer,
            self.learning_rate,
            self.weight_decay,
            self.momentum,
            model,
        )
    }
}

/// A loss over a mini-batch, addressed by row indices into the training matrix.
pub trait BatchObjective {
    fn loss_grad(&self, logits: &Logits, rows: &[usize]) -> Result<LossGrad>;
}

/// Plain cross-entropy against stored labels.
pub struct Supervised<'a> {
    pub labels: &'a [usize],
}

impl BatchObjective for Supervised<'_> {
    fn loss_grad(&self, logits: &Logits, rows: &[usize]) -> Result<LossGrad> {
        let y: Vec<usize> = rows.iter().map(|&r| self.labels[r]).collect();
        cross_entropy_grad(logits, &y)
    }
}

/// Shuffled sample order for one epoch, reproducible per `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(derive_seed("epoch", &[seed, epoch as u64])));
    order
}

/// One optimizer step on `rows`. Returns the batch loss.
pub fn step_on_batch(
    model: &mut Model,
    opt: &mut Optimizer,
    features: &Array2<f64>,
    rows: &[usize],
    objective: &dyn BatchObjective,
) -> Result<f64> {
    let batch = features.select(Axis(0), rows);
    let cache = model.forward_cached(batch.view())?;
    let lg = objective.loss_grad(&cache.logits, rows)?;
    let grads = model.backward(&cache, &lg.dlogits)?;
    opt.step(model, &grads);
    Ok(lg.loss)
}

/// Run `epochs` passes of mini-batch training. Returns the per-step loss trace.
pub fn fit(
    model: &mut Model,
    features: &Array2<f64>,
    objective: &dyn BatchObjective,
    cfg: &TrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = features.nrows();
    if n == 0 {
        return Err(KdError::Data("cannot train on an empty dataset".into()));
    }
    let mut opt = cfg.optimizer_for(model);
    let mut trace = Vec::new();
    for epoch in 0..epochs {
        for rows in epoch_order(n, seed, epoch).chunks(cfg.batch_size.max(1)) {
            trace.push(step_on_batch(model, &mut opt, features, rows, objective)?);
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-indexed epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// Supervised training with early stopping on validation accuracy.
///
/// Shuffling is driven by `model.seed`; the parameters of the best
/// validation epoch are returned.
pub fn train_supervised(
    model: &Model,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    if train.is_empty() {
        return Err(KdError::Data("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(KdError::Data("validation set is empty".into()));
    }
    if let Some(e) = cfg.validate().into_iter().next() {
        return Err(KdError::Config(e));
    }
    let objective = Supervised {
        labels: &train.labels,
    };
    let mut current = model.clone();
    let mut opt = cfg.optimizer_for(&current);
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let seed = model.seed;
    for epoch in 0..cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for rows in epoch_order(train.len(), seed, epoch).chunks(cfg.batch_size) {
            loss_sum += step_on_batch(&mut current, &mut opt, &train.features, rows, &objective)?;
            steps += 1;
        }
        let val_accuracy = evaluate(&current, val)?.overall_accuracy;
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / steps as f64,
            val_accuracy,
        });
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best = current.clone();
            best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            best_val_accuracy: best_acc,
        },
    ))
}
