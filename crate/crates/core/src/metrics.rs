//! Accuracy gain, per-class learning/forgetting, and aggregate gains.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{KdError, Result};
use crate::nn::EvalReport;
use crate::orchestrator::PairResult;

fn check_classes(pre: &EvalReport, post: &EvalReport) -> Result<()> {
    if pre.num_classes() != post.num_classes() {
        return Err(KdError::Shape(format!(
            "pre-distillation report has {} classes, post has {}",
            pre.num_classes(),
            post.num_classes()
        )));
    }
    Ok(())
}

/// `(post - pre) * 100`, in percentage points. May be negative.
pub fn accuracy_gain(pre: &EvalReport, post: &EvalReport) -> Result<f64> {
    check_classes(pre, post)?;
    Ok((post.overall_accuracy - pre.overall_accuracy) * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub gain_points: f64,
    /// Teacher accuracy minus pre-distillation student accuracy, in points.
    pub strength_delta: f64,
}

impl GainRecord {
    pub fn new(pre: &EvalReport, post: &EvalReport, teacher: &EvalReport) -> Result<Self> {
        Ok(Self {
            gain_points: accuracy_gain(pre, post)?,
            strength_delta: (teacher.overall_accuracy - pre.overall_accuracy) * 100.0,
        })
    }
}

/// Per-class accuracy increase (`learning`) and decrease (`forgetting`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnForget {
    pub learning: Vec<f64>,
    pub forgetting: Vec<f64>,
}

impl LearnForget {
    /// `sum_c support_c * (learning_c - forgetting_c) / sum_c support_c`.
    pub fn net_fraction(&self, support: &[usize]) -> f64 {
        let total: usize = support.iter().sum();
        if total == 0 {
            return 0.0;
        }
        self.learning
            .iter()
            .zip(&self.forgetting)
            .zip(support)
            .map(|((l, f), &s)| s as f64 * (l - f))
            .sum::<f64>()
            / total as f64
    }
}

pub fn learning_forgetting(pre: &EvalReport, post: &EvalReport) -> Result<LearnForget> {
    check_classes(pre, post)?;
    let (learning, forgetting) = pre
        .per_class_accuracy
        .iter()
        .zip(&post.per_class_accuracy)
        .map(|(&a, &b)| ((b - a).max(0.0), (a - b).max(0.0)))
        .unzip();
    Ok(LearnForget {
        learning,
        forgetting,
    })
}

/// Summed gain points per method.
pub fn cumulative_gain(results: &[PairResult]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in results {
        *out.entry(r.method.clone()).or_insert(0.0) += r.gain_points;
    }
    out
}
