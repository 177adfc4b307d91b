use std::fmt;

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{KdError, Result};
use crate::rng::{derive_seed, seeded, tag_code};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferOrigin {
    PublicLabeled,
    PublicUnlabeledSmall,
    PublicUnlabeledLarge,
    StudentData,
}

impl TransferOrigin {
    pub const ALL: [TransferOrigin; 4] = [
        TransferOrigin::PublicLabeled,
        TransferOrigin::PublicUnlabeledSmall,
        TransferOrigin::PublicUnlabeledLarge,
        TransferOrigin::StudentData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransferOrigin::PublicLabeled => "public_labeled",
            TransferOrigin::PublicUnlabeledSmall => "public_unlabeled_small",
            TransferOrigin::PublicUnlabeledLarge => "public_unlabeled_large",
            TransferOrigin::StudentData => "student_data",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == name)
    }

    pub fn is_public(self) -> bool {
        self != TransferOrigin::StudentData
    }

    pub fn is_labeled(self) -> bool {
        matches!(self, TransferOrigin::PublicLabeled | TransferOrigin::StudentData)
    }
}

impl fmt::Display for TransferOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample counts drawn from the public pool for each public option.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSizes {
    pub labeled: usize,
    pub unlabeled_small: usize,
    pub unlabeled_large: usize,
}

impl TransferSizes {
    /// 500 labeled, 500 small unlabeled, 5,000 large unlabeled.
    pub fn full_scale() -> Self {
        Self {
            labeled: 500,
            unlabeled_small: 500,
            unlabeled_large: 5000,
        }
    }

    /// One tenth of full scale.
    pub fn desk_scale() -> Self {
        Self {
            labeled: 50,
            unlabeled_small: 50,
            unlabeled_large: 500,
        }
    }

    pub fn for_origin(&self, origin: TransferOrigin) -> Option<usize> {
        match origin {
            TransferOrigin::PublicLabeled => Some(self.labeled),
            TransferOrigin::PublicUnlabeledSmall => Some(self.unlabeled_small),
            TransferOrigin::PublicUnlabeledLarge => Some(self.unlabeled_large),
            TransferOrigin::StudentData => None,
        }
    }

    /// Pool size that covers every public option.
    pub fn pool_size(&self) -> usize {
        self.labeled.max(self.unlabeled_small).max(self.unlabeled_large)
    }
}

impl Default for TransferSizes {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// Data over which distillation losses are computed.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSet {
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub class_count: usize,
    pub origin: TransferOrigin,
}

impl TransferSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn from_labeled(data: &LabeledDataset, origin: TransferOrigin) -> Self {
        Self {
            features: data.features.clone(),
            labels: Some(data.labels.clone()),
            class_count: data.class_count,
            origin,
        }
    }

    /// Labels stripped, origin `public_unlabeled_large`.
    pub fn unlabeled(features: Array2<f64>, class_count: usize) -> Self {
        Self {
            features,
            labels: None,
            class_count,
            origin: TransferOrigin::PublicUnlabeledLarge,
        }
    }
}

/// Build a transfer set for `origin`. Public options sample without
/// replacement from `public_pool`; unlabeled options drop the labels.
pub fn build_transfer_set(
    origin: TransferOrigin,
    public_pool: &LabeledDataset,
    student_data: &LabeledDataset,
    sizes: &TransferSizes,
    seed: u64,
) -> Result<TransferSet> {
    let Some(size) = sizes.for_origin(origin) else {
        return Ok(TransferSet::from_labeled(student_data, origin));
    };
    if size == 0 {
        return Err(KdError::Config(format!("{origin} transfer size is 0")));
    }
    if public_pool.len() < size {
        return Err(KdError::Config(format!(
            "{origin} needs {size} samples but the public pool holds {}",
            public_pool.len()
        )));
    }
    let mut rng = seeded(derive_seed("transfer", &[seed, tag_code(origin.name())]));
    let mut idx = sample(&mut rng, public_pool.len(), size).into_vec();
    idx.sort_unstable();
    let features = public_pool.features.select(Axis(0), &idx);
    let labels = origin
        .is_labeled()
        .then(|| idx.iter().map(|&i| public_pool.labels[i]).collect());
    Ok(TransferSet {
        features,
        labels,
        class_count: public_pool.class_count,
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> LabeledDataset {
        let feats = Array2::from_shape_fn((n, 3), |(i, j)| (i * 3 + j) as f64);
        LabeledDataset::new(feats, (0..n).map(|i| i % 4).collect(), 4).unwrap()
    }

    #[test]
    fn full_scale_sizes() {
        let p = pool(6000);
        let student = pool(37);
        let sizes = TransferSizes::full_scale();
        let large = build_transfer_set(TransferOrigin::PublicUnlabeledLarge, &p, &student, &sizes, 1).unwrap();
        assert_eq!(large.len(), 5000);
        assert!(large.labels.is_none());
        let labeled = build_transfer_set(TransferOrigin::PublicLabeled, &p, &student, &sizes, 1).unwrap();
        assert_eq!(labeled.len(), 500);
        assert_eq!(labeled.labels.as_ref().unwrap().len(), 500);
        let own = build_transfer_set(TransferOrigin::StudentData, &p, &student, &sizes, 1).unwrap();
        assert_eq!(own.len(), 37);
        assert_eq!(own.labels.as_deref(), Some(&student.labels[..]));
    }

    #[test]
    fn labels_present_iff_labeled_origin() {
        let p = pool(600);
        let student = pool(10);
        for origin in TransferOrigin::ALL {
            let ts = build_transfer_set(origin, &p, &student, &TransferSizes::desk_scale(), 3).unwrap();
            assert_eq!(ts.is_labeled(), origin.is_labeled(), "{origin}");
        }
    }

    #[test]
    fn sampled_rows_are_distinct_pool_rows() {
        let p = pool(100);
        let ts = build_transfer_set(
            TransferOrigin::PublicLabeled,
            &p,
            &p,
            &TransferSizes { labeled: 40, ..TransferSizes::desk_scale() },
            9,
        )
        .unwrap();
        let mut firsts: Vec<i64> = ts.features.column(0).iter().map(|&v| v as i64).collect();
        firsts.dedup();
        assert_eq!(firsts.len(), 40);
        for (row, &y) in ts.features.rows().into_iter().zip(ts.labels.as_ref().unwrap()) {
            let i = row[0] as usize / 3;
            assert_eq!(p.labels[i], y);
        }
    }

    #[test]
    fn undersized_pool_is_config_error() {
        let p = pool(100);
        let err = build_transfer_set(TransferOrigin::PublicUnlabeledLarge, &p, &p, &TransferSizes::desk_scale(), 0);
        assert!(matches!(err, Err(KdError::Config(_))));
    }
}
