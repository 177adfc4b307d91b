use serde::{Deserialize, Serialize};

use super::objective::{KdObjective, SoftTarget};
use super::vanilla::{check_transfer, run_objective, DistillConfig, DistillOutcome};
use crate::data::TransferSet;
use crate::error::{KdError, Result};
use crate::nn::{softmax_t, EvalReport, Model};

/// Class-wise weight vector for each teacher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherWeights {
    pub per_teacher: Vec<Vec<f64>>,
}

impl TeacherWeights {
    /// `1 / (J + 1)` everywhere, counting the student as an implicit teacher.
    pub fn equal(teachers: usize, classes: usize) -> Self {
        let w = 1.0 / (teachers + 1) as f64;
        Self {
            per_teacher: vec![vec![w; classes]; teachers],
        }
    }

    pub fn uniform(teachers: usize, classes: usize, value: f64) -> Self {
        Self {
            per_teacher: vec![vec![value; classes]; teachers],
        }
    }

    pub fn num_teachers(&self) -> usize {
        self.per_teacher.len()
    }

    /// Non-negative entries and per-class sums of at most one.
    pub fn check_invariants(&self) -> Result<()> {
        let classes = self.per_teacher.first().map_or(0, Vec::len);
        for c in 0..classes {
            let mut sum = 0.0;
            for w in &self.per_teacher {
                if w[c] < 0.0 {
                    return Err(KdError::Config(format!("negative weight for class {c}")));
                }
                sum += w[c];
            }
            if sum > 1.0 + 1e-12 {
                return Err(KdError::Config(format!("class {c} weights sum to {sum} > 1")));
            }
        }
        Ok(())
    }
}

/// Teacher `j`'s weight for class `c`: its class accuracy over the summed
/// class accuracies of the student and all teachers, or 0 when that sum is 0.
pub fn adaptive_teacher_weights(
    student_eval: &EvalReport,
    teacher_evals: &[EvalReport],
) -> Result<TeacherWeights> {
    let classes = student_eval.num_classes();
    if let Some((j, r)) = teacher_evals
        .iter()
        .enumerate()
        .find(|(_, r)| r.num_classes() != classes)
    {
        return Err(KdError::Shape(format!(
            "teacher {j} reports {} classes, student reports {classes}",
            r.num_classes()
        )));
    }
    let per_teacher = teacher_evals
        .iter()
        .map(|t| {
            (0..classes)
                .map(|c| {
                    let denom = student_eval.per_class_accuracy[c]
                        + teacher_evals.iter().map(|r| r.per_class_accuracy[c]).sum::<f64>();
                    if denom > 0.0 {
                        t.per_class_accuracy[c] / denom
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(TeacherWeights { per_teacher })
}

/// Distill several teachers into one student with class-wise teacher weights.
///
/// Each sample's KL term toward teacher `j` is scaled by `j`'s weight at the
/// class `j` predicts for that sample. Labeled transfer sets add the
/// `(1 - alpha)` CE term.
pub fn distill_multi_teacher(
    student: &Model,
    teachers: &[&Model],
    weights: &TeacherWeights,
    ts: &TransferSet,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<DistillOutcome> {
    cfg.check()?;
    check_transfer(ts)?;
    if weights.num_teachers() != teachers.len() {
        return Err(KdError::Config(format!(
            "{} weight vectors for {} teachers",
            weights.num_teachers(),
            teachers.len()
        )));
    }
    let targets = teachers
        .iter()
        .zip(&weights.per_teacher)
        .map(|(t, w)| {
            let logits = t.forward_logits(ts.features.view())?;
            let predicted = softmax_t(&logits, 1.0)?.argmax();
            let sample_w = predicted
                .iter()
                .map(|&c| {
                    w.get(c).copied().ok_or_else(|| {
                        KdError::Shape(format!("weight vector lacks class {c}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            SoftTarget::from_model(t, &ts.features, cfg.temperature, sample_w)
        })
        .collect::<Result<Vec<_>>>()?;
    let objective = KdObjective {
        alpha: cfg.alpha,
        temperature: cfg.temperature,
        labels: ts.labels.as_deref(),
        targets,
    };
    run_objective(student, ts, &objective, cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: &[f64]) -> EvalReport {
        EvalReport {
            overall_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
            per_class_accuracy: acc.to_vec(),
            per_class_support: vec![10; acc.len()],
        }
    }

    #[test]
    fn weights_from_class_accuracies() {
        let w = adaptive_teacher_weights(&report(&[0.5, 0.0]), &[report(&[0.3, 0.0]), report(&[0.2, 0.0])]).unwrap();
        assert!((w.per_teacher[0][0] - 0.3).abs() < 1e-15);
        assert!((w.per_teacher[1][0] - 0.2).abs() < 1e-15);
        assert_eq!(w.per_teacher[0][1], 0.0);
        assert_eq!(w.per_teacher[1][1], 0.0);
        w.check_invariants().unwrap();
    }

    #[test]
    fn lone_teacher_over_blind_student_gets_full_weight() {
        let w = adaptive_teacher_weights(&report(&[0.0]), &[report(&[0.7])]).unwrap();
        assert_eq!(w.per_teacher[0][0], 1.0);
    }

    #[test]
    fn class_count_mismatch_is_shape_error() {
        let e = adaptive_teacher_weights(&report(&[0.5, 0.5]), &[report(&[0.5])]);
        assert!(matches!(e, Err(KdError::Shape(_))));
    }

    #[test]
    fn equal_weights_count_the_student() {
        let w = TeacherWeights::equal(3, 2);
        assert_eq!(w.per_teacher, vec![vec![0.25, 0.25]; 3]);
        w.check_invariants().unwrap();
    }
}
