use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KdError, Result};
use crate::rng::{derive_seed, seeded};

/// Feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(KdError::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(KdError::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Sample indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if self.labels.iter().any(|&y| y >= class_count) {
            return Err(KdError::Data(format!(
                "cannot shrink class count to {class_count}"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }
}

/// Parse a dataset CSV: header `label,f0,...,fD-1`, then one sample per row.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| KdError::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => {
            return Err(KdError::Parse {
                line: 1,
                message: "empty file; expected header `label,f0,...`".into(),
            })
        }
        Some(r) => r.map_err(|e| KdError::Parse {
            line: 1,
            message: e.to_string(),
        })?,
    };
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(KdError::Parse {
            line: 1,
            message: "header must start with `label` followed by feature columns".into(),
        });
    }
    let dim = header.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| KdError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != dim + 1 {
            return Err(KdError::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 1, rec.len()),
            });
        }
        let label: i64 = rec[0].parse().map_err(|_| KdError::Parse {
            line,
            message: format!("label `{}` is not an integer", &rec[0]),
        })?;
        if label < 0 {
            return Err(KdError::Parse {
                line,
                message: format!("negative label {label}"),
            });
        }
        labels.push(label as usize);
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field.parse().map_err(|_| KdError::Parse {
                line,
                message: format!("feature f{j} `{field}` is not numeric"),
            })?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(KdError::Parse {
            line: 2,
            message: "no samples after header".into(),
        });
    }
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    let features = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| KdError::Shape(e.to_string()))?;
    LabeledDataset::new(features, labels, class_count)
}

/// Serialize to the dataset CSV format. Floats use shortest round-trip form.
pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let mut out = String::from("label");
    for j in 0..data.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (row, &y) in data.features.rows().into_iter().zip(&data.labels) {
        out.push_str(&y.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(data: &LabeledDataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_csv(data)).map_err(|e| KdError::io(path, e))
}

/// Stratified train/validation index split.
///
/// Each class contributes `round(val_fraction * n_c)` samples to validation,
/// capped so that at least one sample per class stays in training. Index
/// lists are returned sorted.
pub fn split_indices(
    data: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(KdError::Config(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (c, mut idx) in data.class_indices().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(KdError::Split(format!(
                "class {c} has {} sample(s); at least 2 are needed",
                idx.len()
            )));
        }
        idx.shuffle(&mut seeded(derive_seed("split", &[seed, c as u64])));
        let n_val = ((val_fraction * idx.len() as f64).round() as usize).min(idx.len() - 1);
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split_train_val(
    data: &LabeledDataset,
    val_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, val) = split_indices(data, val_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&val)))
}

/// Gaussian class blobs for zero-download runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToySpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of class centers around the origin.
    pub separation: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 16,
            train_per_class: 300,
            test_per_class: 100,
            separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.classes < 2 {
            errs.push("toy.classes must be at least 2".into());
        }
        if self.dim == 0 {
            errs.push("toy.dim must be at least 1".into());
        }
        if self.train_per_class < 2 || self.test_per_class < 1 {
            errs.push("toy.train_per_class must be >= 2 and toy.test_per_class >= 1".into());
        }
        if !(self.noise > 0.0) || !(self.separation > 0.0) {
            errs.push("toy.noise and toy.separation must be positive".into());
        }
        errs
    }

    /// `(train, test)` sharing class centers.
    pub fn generate(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        if let Some(e) = self.validate().into_iter().next() {
            return Err(KdError::Config(e));
        }
        let center_dist = Normal::new(0.0, self.separation).expect("positive std");
        let noise = Normal::new(0.0, self.noise).expect("positive std");
        let mut rng = seeded(derive_seed("toy-centers", &[self.seed]));
        let centers = Array2::from_shape_fn((self.classes, self.dim), |_| center_dist.sample(&mut rng));
        let draw = |per_class: usize, tag: &str| {
            let mut rng = seeded(derive_seed(tag, &[self.seed]));
            let n = per_class * self.classes;
            let mut feats = Array2::zeros((n, self.dim));
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % self.classes;
                for j in 0..self.dim {
                    feats[[i, j]] = centers[[c, j]] + noise.sample(&mut rng);
                }
                labels.push(c);
            }
            LabeledDataset::new(feats, labels, self.classes)
        };
        Ok((draw(self.train_per_class, "toy-train")?, draw(self.test_per_class, "toy-test")?))
    }
}
