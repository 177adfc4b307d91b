use serde::{Deserialize, Serialize};

use super::objective::{KdObjective, SoftTarget};
use crate::data::TransferSet;
use crate::error::{KdError, Result};
use crate::nn::{fit, Model, TrainConfig};

/// Hyperparameters shared by the distillation procedures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub temperature: f64,
    pub alpha: f64,
    pub epochs: usize,
    /// Optimizer settings; `max_epochs`/`patience` are ignored here.
    pub optimizer: TrainConfig,
    /// Force the supervised or unsupervised DP-KD mask rule. When unset the
    /// supervised rule is used exactly for public labeled transfer sets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervised_dpkd: Option<bool>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self::vanilla()
    }
}

impl DistillConfig {
    /// The canonical baseline: T = 1, alpha = 0.5, 30 epochs.
    pub fn vanilla() -> Self {
        Self {
            temperature: 1.0,
            alpha: 0.5,
            epochs: 30,
            optimizer: TrainConfig::pretraining(),
            supervised_dpkd: None,
        }
    }

    pub fn with_params(&self, temperature: f64, alpha: f64) -> Self {
        Self {
            temperature,
            alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            errs.push(format!("distill.temperature must be > 0, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            errs.push(format!("distill.alpha must be in [0, 1], got {}", self.alpha));
        }
        errs.extend(self.optimizer.validate().into_iter().map(|e| format!("distill.optimizer: {e}")));
        errs
    }

    pub(crate) fn check(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            Some(e) => Err(KdError::Config(e)),
            None => Ok(()),
        }
    }
}

/// Result of one distillation run.
#[derive(Clone, Debug)]
pub struct DistillOutcome {
    pub model: Model,
    /// Objective over the whole transfer set before the first update.
    pub initial_loss: f64,
    /// Mini-batch losses in update order.
    pub loss_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

pub(crate) fn check_transfer(ts: &TransferSet) -> Result<()> {
    if ts.is_empty() {
        return Err(KdError::Data("transfer set is empty".into()));
    }
    Ok(())
}

pub(crate) fn run_objective(
    student: &Model,
    ts: &TransferSet,
    objective: &KdObjective,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DistillOutcome> {
    let initial_loss = objective.full_loss(&student.forward_logits(ts.features.view())?)?;
    let mut model = student.clone();
    let loss_trace = fit(&mut model, &ts.features, objective, &cfg.optimizer, cfg.epochs, seed)?;
    Ok(DistillOutcome {
        model,
        initial_loss,
        loss_trace,
        warnings: Vec::new(),
    })
}

/// Standard teacher-to-student distillation with mixed CE and KL losses.
///
/// Teachers are averaged. On a public transfer set a frozen copy of the
/// student joins the teachers. Unlabeled transfer sets drop the CE term.
pub fn distill_vanilla(
    student: &Model,
    teachers: &[&Model],
    ts: &TransferSet,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DistillOutcome> {
    cfg.check()?;
    check_transfer(ts)?;
    if teachers.is_empty() {
        return Err(KdError::Config("vanilla distillation needs at least one teacher".into()));
    }
    let mut sources: Vec<&Model> = teachers.to_vec();
    if ts.origin.is_public() {
        sources.push(student);
    }
    let share = 1.0 / sources.len() as f64;
    let targets = sources
        .iter()
        .map(|m| SoftTarget::from_model(m, &ts.features, cfg.temperature, vec![share; ts.len()]))
        .collect::<Result<Vec<_>>>()?;
    let objective = KdObjective {
        alpha: cfg.alpha,
        temperature: cfg.temperature,
        labels: ts.labels.as_deref(),
        targets,
    };
    run_objective(student, ts, &objective, cfg, seed)
}
