//! Temperature softmax and the loss primitives used by every training loop.
//!
//! All losses return their value together with the gradient w.r.t. the
//! student logits; parameter gradients come from [`Model::backward`].
//! Probabilities are clamped to `[PROB_FLOOR, 1]` inside logarithms and the
//! gradients are exact for the clamped functions.
//!
//! [`Model::backward`]: crate::nn::Model::backward

use ndarray::{Array2, Zip};

use super::model::Logits;
use crate::error::{KdError, Result};

pub const PROB_FLOOR: f64 = 1e-12;

/// Row-stochastic matrix of class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist(pub Array2<f64>);

impl ProbDist {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn classes(&self) -> usize {
        self.0.ncols()
    }

    /// Gather a subset of rows.
    pub fn select(&self, rows: &[usize]) -> ProbDist {
        ProbDist(self.0.select(ndarray::Axis(0), rows))
    }

    /// Per-row index of the largest probability, ties toward the lowest class.
    pub fn argmax(&self) -> Vec<usize> {
        self.0.rows().into_iter().map(|r| argmax_row(r.iter().copied())).collect()
    }

    pub fn max_per_row(&self) -> Vec<f64> {
        self.0
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

pub(crate) fn argmax_row(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// A scalar loss together with its gradient w.r.t. the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub dlogits: Array2<f64>,
}

impl LossGrad {
    pub fn zeros(rows: usize, classes: usize) -> Self {
        Self {
            loss: 0.0,
            dlogits: Array2::zeros((rows, classes)),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.loss *= factor;
        self.dlogits.mapv_inplace(|g| g * factor);
        self
    }

    /// `self + factor * other`.
    pub fn add_scaled(mut self, other: &LossGrad, factor: f64) -> Self {
        self.loss += factor * other.loss;
        Zip::from(&mut self.dlogits)
            .and(&other.dlogits)
            .for_each(|a, &b| *a += factor * b);
        self
    }
}

/// Row-wise `exp(z_i / T) / sum_j exp(z_j / T)` with max subtraction.
pub fn softmax_t(logits: &Logits, temperature: f64) -> Result<ProbDist> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(KdError::Domain(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    let mut out = logits.0.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| ((z - max) / temperature).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    Ok(ProbDist(out))
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(KdError::Shape(format!(
            "{} labels for {rows} samples",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(KdError::Data(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean negative log-probability of the true class.
pub fn cross_entropy(probs: &ProbDist, labels: &[usize]) -> Result<f64> {
    check_labels(labels, probs.rows(), probs.classes())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(l, &y)| -probs.0[[l, y]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Cross-entropy at unit temperature, with its logit gradient.
pub fn cross_entropy_grad(logits: &Logits, labels: &[usize]) -> Result<LossGrad> {
    let probs = softmax_t(logits, 1.0)?;
    let loss = cross_entropy(&probs, labels)?;
    let n = labels.len().max(1) as f64;
    let mut grad = probs.0;
    for (l, &y) in labels.iter().enumerate() {
        let mut row = grad.row_mut(l);
        if row[y] > PROB_FLOOR {
            row[y] -= 1.0;
            row.mapv_inplace(|g| g / n);
        } else {
            // ln(PROB_FLOOR) is constant in the logits
            row.fill(0.0);
        }
    }
    Ok(LossGrad {
        loss,
        dlogits: grad,
    })
}

fn kl_row(target: impl Iterator<Item = f64>, student: impl Iterator<Item = f64>) -> f64 {
    target
        .zip(student)
        .filter(|&(q, _)| q > 0.0)
        .map(|(q, p)| q * (q.max(PROB_FLOOR).ln() - p.max(PROB_FLOOR).ln()))
        .sum()
}

/// Mean over samples of `KL(target || student)`.
pub fn kl_divergence(student: &ProbDist, target: &ProbDist) -> Result<f64> {
    if student.0.dim() != target.0.dim() {
        return Err(KdError::Shape(format!(
            "student probabilities {:?} vs target {:?}",
            student.0.dim(),
            target.0.dim()
        )));
    }
    let n = student.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = student
        .0
        .rows()
        .into_iter()
        .zip(target.0.rows())
        .map(|(p, q)| kl_row(q.iter().copied(), p.iter().copied()))
        .sum();
    Ok(total / n as f64)
}

/// `(1/n) * sum_l w_l * KL(target_l || softmax(z_l / T))` and its logit gradient.
///
/// Targets are constants; no gradient reaches whoever produced them.
pub fn weighted_kl_grad(
    student_logits: &Logits,
    target: &ProbDist,
    temperature: f64,
    weights: &[f64],
) -> Result<LossGrad> {
    if student_logits.0.dim() != target.0.dim() {
        return Err(KdError::Shape(format!(
            "student logits {:?} vs target {:?}",
            student_logits.0.dim(),
            target.0.dim()
        )));
    }
    if weights.len() != target.rows() {
        return Err(KdError::Shape(format!(
            "{} sample weights for {} samples",
            weights.len(),
            target.rows()
        )));
    }
    let probs = softmax_t(student_logits, temperature)?;
    let n = target.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(probs.0.raw_dim());
    for (l, &w) in weights.iter().enumerate() {
        let p = probs.0.row(l);
        let q = target.0.row(l);
        loss += w * kl_row(q.iter().copied(), p.iter().copied());
        if w == 0.0 {
            continue;
        }
        let scale = w / (n * temperature);
        let mut g = grad.row_mut(l);
        if p.iter().all(|&pi| pi > PROB_FLOOR) {
            // unclamped: d/dz_j = (p_j - q_j) / T for a normalized target
            Zip::from(&mut g)
                .and(&p)
                .and(&q)
                .for_each(|g, &pj, &qj| *g = scale * (pj - qj));
        } else {
            let mass: f64 = p
                .iter()
                .zip(q.iter())
                .filter(|&(&pi, _)| pi > PROB_FLOOR)
                .map(|(_, &qi)| qi)
                .sum();
            Zip::from(&mut g).and(&p).and(&q).for_each(|g, &pj, &qj| {
                let live = if pj > PROB_FLOOR { qj } else { 0.0 };
                *g = scale * (pj * mass - live);
            });
        }
    }
    Ok(LossGrad {
        loss: loss / n,
        dlogits: grad,
    })
}

/// Unweighted mean KL at temperature `T`.
pub fn kl_grad(student_logits: &Logits, target: &ProbDist, temperature: f64) -> Result<LossGrad> {
    let ones = vec![1.0; target.rows()];
    weighted_kl_grad(student_logits, target, temperature, &ones)
}
