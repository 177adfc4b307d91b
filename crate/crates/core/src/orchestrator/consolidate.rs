use serde::{Deserialize, Serialize};

use super::matrix::transfer_for;
use super::plan::{Participant, Scenario};
use crate::data::TransferOrigin;
use crate::distill::{adaptive_teacher_weights, distill_multi_teacher, DistillConfig, TeacherWeights};
use crate::error::{KdError, Result};
use crate::nn::{evaluate, EvalReport, Model};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// Lowest test accuracy (ties to the lowest id).
    Worst,
    /// Highest test accuracy (ties to the lowest id).
    #[default]
    Best,
    /// A fresh model; every participant becomes a teacher.
    Untrained,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Adaptive,
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsolidationSpec {
    pub start: StartPolicy,
    pub weighting: Weighting,
    pub transfer_option: TransferOrigin,
    pub distill: DistillConfig,
}

impl Default for ConsolidationSpec {
    fn default() -> Self {
        Self {
            start: StartPolicy::Best,
            weighting: Weighting::Adaptive,
            transfer_option: TransferOrigin::StudentData,
            distill: DistillConfig::vanilla(),
        }
    }
}

impl ConsolidationSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs: Vec<String> = self
            .distill
            .validate()
            .into_iter()
            .map(|e| format!("consolidate.{e}"))
            .collect();
        if self.start == StartPolicy::Untrained && self.transfer_option == TransferOrigin::StudentData {
            errs.push("consolidate: an untrained start has no student data to use as transfer set".into());
        }
        errs
    }
}

#[derive(Clone, Debug)]
pub struct Consolidated {
    pub model: Model,
    pub eval: EvalReport,
    /// Participant used as the starting student, if any.
    pub start_id: Option<usize>,
    pub teacher_ids: Vec<usize>,
    pub weights: TeacherWeights,
    pub start_eval: EvalReport,
}

pub fn select_start(models: &[Participant], policy: StartPolicy) -> Option<usize> {
    let pick = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for (i, p) in models.iter().enumerate().skip(1) {
            if better(p.eval.overall_accuracy, models[best].eval.overall_accuracy) {
                best = i;
            }
        }
        best
    };
    match policy {
        StartPolicy::Best => Some(pick(|a, b| a > b)),
        StartPolicy::Worst => Some(pick(|a, b| a < b)),
        StartPolicy::Untrained => None,
    }
}

/// Distill all participants into one model with class-wise teacher weights.
///
/// Adaptive weights come from the stored test evaluations of the starting
/// student and the teachers.
pub fn consolidate_models(
    scenario: &Scenario,
    models: &[Participant],
    spec: &ConsolidationSpec,
) -> Result<Consolidated> {
    if models.len() < 2 {
        return Err(KdError::Config(format!(
            "consolidation needs at least 2 models, got {}",
            models.len()
        )));
    }
    if let Some(e) = spec.validate().into_iter().next() {
        return Err(KdError::Config(e));
    }
    let seed = scenario.plan.seed;
    let start_id = select_start(models, spec.start);
    let (student, start_eval) = match start_id {
        Some(i) => (models[i].model.clone(), models[i].eval.clone()),
        None => {
            let m = Model::init(&scenario.arch, derive_seed("consolidate-init", &[seed]))?;
            let e = evaluate(&m, &scenario.test)?;
            (m, e)
        }
    };
    let teacher_ids: Vec<usize> = (0..models.len()).filter(|&i| Some(i) != start_id).collect();
    let classes = scenario.arch.num_classes;
    let weights = match spec.weighting {
        Weighting::Equal => TeacherWeights::equal(teacher_ids.len(), classes),
        Weighting::Adaptive => {
            let evals: Vec<EvalReport> = teacher_ids.iter().map(|&i| models[i].eval.clone()).collect();
            adaptive_teacher_weights(&start_eval, &evals)?
        }
    };
    let ts = transfer_for(scenario, spec.transfer_option, start_id.unwrap_or(0))?;
    let teachers: Vec<&Model> = teacher_ids.iter().map(|&i| &models[i].model).collect();
    let out = distill_multi_teacher(
        &student,
        &teachers,
        &weights,
        &ts,
        &spec.distill,
        derive_seed("consolidate", &[seed]),
    )?;
    let eval = evaluate(&out.model, &scenario.test)?;
    Ok(Consolidated {
        model: out.model,
        eval,
        start_id,
        teacher_ids,
        weights,
        start_eval,
    })
}
