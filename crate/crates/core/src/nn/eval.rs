use serde::{Deserialize, Serialize};

use super::loss::argmax_row;
use super::model::Model;
use crate::data::LabeledDataset;
use crate::error::{KdError, Result};

/// Overall and per-class argmax accuracy on a labeled set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub per_class_support: Vec<usize>,
}

impl EvalReport {
    pub fn num_classes(&self) -> usize {
        self.per_class_accuracy.len()
    }

    pub fn total_support(&self) -> usize {
        self.per_class_support.iter().sum()
    }

    /// Build from per-class correct counts; classes without support score 0.
    pub fn from_counts(correct: &[usize], support: &[usize]) -> Self {
        let total: usize = support.iter().sum();
        let hits: usize = correct.iter().sum();
        let per_class_accuracy = correct
            .iter()
            .zip(support)
            .map(|(&c, &s)| if s == 0 { 0.0 } else { c as f64 / s as f64 })
            .collect();
        Self {
            overall_accuracy: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
            per_class_accuracy,
            per_class_support: support.to_vec(),
        }
    }
}

/// Argmax predictions; ties go to the lowest class index.
pub fn predict(model: &Model, data: &LabeledDataset) -> Result<Vec<usize>> {
    let logits = model.forward_logits(data.features.view())?;
    Ok(logits
        .0
        .rows()
        .into_iter()
        .map(|r| argmax_row(r.iter().copied()))
        .collect())
}

pub fn evaluate(model: &Model, data: &LabeledDataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(KdError::Data("cannot evaluate on an empty dataset".into()));
    }
    let classes = model.arch.num_classes.max(data.class_count);
    let preds = predict(model, data)?;
    let mut correct = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    for (&p, &y) in preds.iter().zip(&data.labels) {
        support[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    Ok(EvalReport::from_counts(&correct, &support))
}
