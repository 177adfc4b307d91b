use crate::error::{KdError, Result};
use crate::nn::{cross_entropy_grad, softmax_t, weighted_kl_grad, BatchObjective, Logits, LossGrad, Model, ProbDist};

/// Soft targets of one frozen model over the whole transfer set, with a
/// per-sample weight on its KL term.
pub struct SoftTarget {
    pub probs: ProbDist,
    pub weights: Vec<f64>,
}

impl SoftTarget {
    pub fn from_model(
        model: &Model,
        features: &ndarray::Array2<f64>,
        temperature: f64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let probs = softmax_t(&model.forward_logits(features.view())?, temperature)?;
        if weights.len() != probs.rows() {
            return Err(KdError::Shape(format!(
                "{} weights for {} transfer samples",
                weights.len(),
                probs.rows()
            )));
        }
        Ok(Self { probs, weights })
    }
}

/// `(1 - alpha) * CE + alpha * T^2 * sum_j (w_j * KL(p_j || p_s))`.
///
/// Without labels the CE term is dropped and the KL sum stands alone.
pub struct KdObjective<'a> {
    pub alpha: f64,
    pub temperature: f64,
    pub labels: Option<&'a [usize]>,
    pub targets: Vec<SoftTarget>,
}

impl KdObjective<'_> {
    /// Loss over the full transfer set, without updating anything.
    pub fn full_loss(&self, logits: &Logits) -> Result<f64> {
        let rows: Vec<usize> = (0..logits.rows()).collect();
        Ok(self.loss_grad(logits, &rows)?.loss)
    }
}

impl BatchObjective for KdObjective<'_> {
    fn loss_grad(&self, logits: &Logits, rows: &[usize]) -> Result<LossGrad> {
        let t = self.temperature;
        let mut kl = LossGrad::zeros(logits.rows(), logits.classes());
        for target in &self.targets {
            let w: Vec<f64> = rows.iter().map(|&r| target.weights[r]).collect();
            let part = weighted_kl_grad(logits, &target.probs.select(rows), t, &w)?;
            kl = kl.add_scaled(&part, 1.0);
        }
        let kl = kl.scaled(t * t);
        match self.labels {
            Some(labels) => {
                let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
                let ce = cross_entropy_grad(logits, &y)?;
                Ok(ce.scaled(1.0 - self.alpha).add_scaled(&kl, self.alpha))
            }
            None => Ok(kl),
        }
    }
}
