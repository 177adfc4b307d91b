use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::model::{Gradients, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First-order optimizer with decoupled weight decay on weight matrices.
/// Biases are never decayed.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    momentum: f64,
    step: i32,
    m_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_w: Vec<Array2<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl Optimizer {
    pub fn new(
        kind: OptimizerKind,
        lr: f64,
        weight_decay: f64,
        momentum: f64,
        model: &Model,
    ) -> Self {
        let zw = || model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let zb = || model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        Self {
            kind,
            lr,
            weight_decay,
            momentum,
            step: 0,
            m_w: zw(),
            m_b: zb(),
            v_w: zw(),
            v_b: zb(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients) {
        self.step += 1;
        let lr = self.lr;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Adam => {
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for l in 0..model.weights.len() {
                    Zip::from(&mut model.weights[l])
                        .and(&mut self.m_w[l])
                        .and(&mut self.v_w[l])
                        .and(&grads.weights[l])
                        .for_each(|w, m, v, &g| {
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            let update = (*m / c1) / ((*v / c2).sqrt() + EPS);
                            *w -= lr * (update + wd * *w);
                        });
                    Zip::from(&mut model.biases[l])
                        .and(&mut self.m_b[l])
                        .and(&mut self.v_b[l])
                        .and(&grads.biases[l])
                        .for_each(|b, m, v, &g| {
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            *b -= lr * ((*m / c1) / ((*v / c2).sqrt() + EPS));
                        });
                }
            }
            OptimizerKind::Sgd => {
                let mu = self.momentum;
                for l in 0..model.weights.len() {
                    Zip::from(&mut model.weights[l])
                        .and(&mut self.m_w[l])
                        .and(&grads.weights[l])
                        .for_each(|w, buf, &g| {
                            let d = if mu > 0.0 {
                                *buf = mu * *buf + g;
                                *buf
                            } else {
                                g
                            };
                            *w -= lr * (d + wd * *w);
                        });
                    Zip::from(&mut model.biases[l])
                        .and(&mut self.m_b[l])
                        .and(&grads.biases[l])
                        .for_each(|b, buf, &g| {
                            let d = if mu > 0.0 {
                                *buf = mu * *buf + g;
                                *buf
                            } else {
                                g
                            };
                            *b -= lr * d;
                        });
                }
            }
        }
    }
}
