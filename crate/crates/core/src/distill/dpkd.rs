use serde::{Deserialize, Serialize};

use super::objective::{KdObjective, SoftTarget};
use super::vanilla::{check_transfer, run_objective, DistillConfig, DistillOutcome};
use crate::data::{TransferOrigin, TransferSet};
use crate::error::{KdError, Result};
use crate::nn::{softmax_t, Model};

/// Per-sample routing: `teacher[l]` xor `frozen[l]` is set for every sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPair {
    pub teacher: Vec<bool>,
    pub frozen: Vec<bool>,
}

impl MaskPair {
    pub fn len(&self) -> usize {
        self.teacher.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teacher.is_empty()
    }

    /// Build from per-sample scores; the teacher wins only on a strict `>`.
    pub fn from_scores(teacher: &[f64], frozen: &[f64]) -> Self {
        let t: Vec<bool> = teacher.iter().zip(frozen).map(|(a, b)| a > b).collect();
        let f = t.iter().map(|&x| !x).collect();
        Self { teacher: t, frozen: f }
    }

    pub fn teacher_weights(&self) -> Vec<f64> {
        self.teacher.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    pub fn frozen_weights(&self) -> Vec<f64> {
        self.frozen.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    pub fn teacher_count(&self) -> usize {
        self.teacher.iter().filter(|&&m| m).count()
    }
}

/// Route each transfer sample to the teacher or to the frozen student.
///
/// Supervised: compare the probability each model assigns to the true class.
/// Unsupervised: compare each model's top-class confidence.
pub fn dpkd_masks(
    teacher: &Model,
    frozen_student: &Model,
    ts: &TransferSet,
    supervised: bool,
) -> Result<MaskPair> {
    let pt = softmax_t(&teacher.forward_logits(ts.features.view())?, 1.0)?;
    let ps = softmax_t(&frozen_student.forward_logits(ts.features.view())?, 1.0)?;
    if supervised {
        let labels = ts.labels.as_ref().ok_or_else(|| {
            KdError::Config(format!(
                "supervised DP-KD needs labels but the {} transfer set has none",
                ts.origin
            ))
        })?;
        let t: Vec<f64> = labels.iter().enumerate().map(|(l, &y)| pt.0[[l, y]]).collect();
        let s: Vec<f64> = labels.iter().enumerate().map(|(l, &y)| ps.0[[l, y]]).collect();
        Ok(MaskPair::from_scores(&t, &s))
    } else {
        Ok(MaskPair::from_scores(&pt.max_per_row(), &ps.max_per_row()))
    }
}

pub fn dpkd_supervised_for(ts: &TransferSet, cfg: &DistillConfig) -> bool {
    cfg.supervised_dpkd
        .unwrap_or(ts.origin == TransferOrigin::PublicLabeled)
}

#[derive(Clone, Debug)]
pub struct DpkdOutcome {
    pub outcome: DistillOutcome,
    pub masks: MaskPair,
}

/// Data-partitioning distillation.
///
/// Loss: `T^2/n * sum_l [m_t KL(p_t || p_s) + m_st KL(p_st || p_s)]` where
/// `st` is a frozen snapshot of the initial student. Masks are computed once
/// from the pre-distillation models and held fixed.
pub fn distill_dpkd(
    student: &Model,
    teacher: &Model,
    ts: &TransferSet,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DpkdOutcome> {
    cfg.check()?;
    check_transfer(ts)?;
    let frozen = student.clone();
    let masks = dpkd_masks(teacher, &frozen, ts, dpkd_supervised_for(ts, cfg))?;
    let targets = vec![
        SoftTarget::from_model(teacher, &ts.features, cfg.temperature, masks.teacher_weights())?,
        SoftTarget::from_model(&frozen, &ts.features, cfg.temperature, masks.frozen_weights())?,
    ];
    let objective = KdObjective {
        alpha: 1.0,
        temperature: cfg.temperature,
        labels: None,
        targets,
    };
    let outcome = run_objective(student, ts, &objective, cfg, seed)?;
    Ok(DpkdOutcome { outcome, masks })
}
