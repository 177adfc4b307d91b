use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{KdError, Result};
use crate::rng::seeded;

/// Layer layout of a feed-forward ReLU classifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub num_classes: usize,
}

impl ArchSpec {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_layers,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(KdError::Config("input_dim must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(KdError::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if let Some(pos) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(KdError::Config(format!("hidden layer {pos} has width 0")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_layers.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_layers);
        widths.push(self.num_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Raw class scores, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits(pub Array2<f64>);

impl Logits {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn classes(&self) -> usize {
        self.0.ncols()
    }
}

/// Dense parameters of an MLP. Weight `l` has shape `(fan_in, fan_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ArchSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub seed: u64,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    /// Input of every layer (the batch itself, then post-ReLU activations).
    inputs: Vec<Array2<f64>>,
    pub logits: Logits,
}

/// Parameter gradients, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&x| x == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }
}

impl Model {
    /// Scaled-uniform (Glorot) initialization, biases at zero.
    pub fn init(arch: &ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (fan_in, fan_out) in arch.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            arch: arch.clone(),
            weights,
            biases,
            seed,
        })
    }

    pub fn zeros(arch: &ArchSpec) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        Ok(Self {
            arch: arch.clone(),
            weights: dims.iter().map(|&d| Array2::zeros(d)).collect(),
            biases: dims.iter().map(|&(_, o)| Array1::zeros(o)).collect(),
            seed: 0,
        })
    }

    /// Build a model from explicit parameters, checking the shape chain.
    pub fn from_parts(
        arch: ArchSpec,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        if weights.len() != dims.len() || biases.len() != dims.len() {
            return Err(KdError::Shape(format!(
                "expected {} layers, got {} weights and {} biases",
                dims.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (l, (&(i, o), (w, b))) in dims.iter().zip(weights.iter().zip(&biases)).enumerate() {
            if w.dim() != (i, o) || b.len() != o {
                return Err(KdError::Shape(format!(
                    "layer {l}: expected ({i}x{o}) weights and {o} biases, got {:?} and {}",
                    w.dim(),
                    b.len()
                )));
            }
        }
        Ok(Self {
            arch,
            weights,
            biases,
            seed,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.arch.input_dim {
            return Err(KdError::Shape(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward_logits(&self, batch: ArrayView2<f64>) -> Result<Logits> {
        self.check_batch(&batch)?;
        let mut h = batch.to_owned();
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|x| x.max(0.0));
            }
            h = z;
        }
        Ok(Logits(h))
    }

    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&batch)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut h = batch.to_owned();
        let last = self.num_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|x| x.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        Ok(ForwardCache {
            inputs,
            logits: Logits(h),
        })
    }

    /// Backpropagate `dlogits` (gradient of the loss w.r.t. the logits).
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Result<Gradients> {
        if dlogits.dim() != cache.logits.0.dim() {
            return Err(KdError::Shape(format!(
                "logit gradient {:?} does not match logits {:?}",
                dlogits.dim(),
                cache.logits.0.dim()
            )));
        }
        let n = self.num_layers();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = dlogits.clone();
        for l in (0..n).rev() {
            let input = &cache.inputs[l];
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                // inputs[l] is relu(z_{l-1}); its derivative is 1 where positive.
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients {
            weights: gw,
            biases: gb,
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(KdError::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    /// True when both models have the same architecture and parameter shapes.
    pub fn same_shape(&self, other: &Model) -> bool {
        self.arch == other.arch
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.dim() == b.dim())
    }
}
