//! Participant partitioning strategies.
//!
//! Each strategy implements [`Partitioner`] and is registered by name in a
//! [`PartitionerRegistry`], so experiment configs select them at runtime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{KdError, Result};
use crate::rng::{derive_seed, hex_digest, seeded, Rng};

/// Redraw budget for samplers that can leave a participant empty.
pub const MAX_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    Uniform,
    QuantitySkew,
    Specialized,
    LabelSkewChunks,
    LabelSkewDirichlet,
}

impl PartitionStrategy {
    pub const ALL: [PartitionStrategy; 5] = [
        PartitionStrategy::Uniform,
        PartitionStrategy::QuantitySkew,
        PartitionStrategy::Specialized,
        PartitionStrategy::LabelSkewChunks,
        PartitionStrategy::LabelSkewDirichlet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PartitionStrategy::Uniform => "uniform",
            PartitionStrategy::QuantitySkew => "quantity_skew",
            PartitionStrategy::Specialized => "specialized",
            PartitionStrategy::LabelSkewChunks => "label_skew_chunks",
            PartitionStrategy::LabelSkewDirichlet => "label_skew_dirichlet",
        }
    }
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Strategy knobs; only the fields relevant to a strategy are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominant_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_chunk: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
}

/// Assignment of source-sample indices to participants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub strategy: PartitionStrategy,
    pub seed: u64,
    pub params: PartitionParams,
    pub participants: Vec<Vec<usize>>,
}

impl PartitionPlan {
    fn new(
        strategy: PartitionStrategy,
        seed: u64,
        params: PartitionParams,
        mut participants: Vec<Vec<usize>>,
    ) -> Self {
        for p in &mut participants {
            p.sort_unstable();
        }
        Self {
            strategy,
            seed,
            params,
            participants,
        }
    }

    pub fn num_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.participants.iter().map(Vec::len).collect()
    }

    /// Disjointness, range and non-emptiness checks against a source of `n` rows.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (k, idx) in self.participants.iter().enumerate() {
            if idx.is_empty() {
                return Err(KdError::Partition(format!("participant {k} is empty")));
            }
            for &i in idx {
                if i >= n {
                    return Err(KdError::Partition(format!(
                        "participant {k} holds index {i} outside 0..{n}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(KdError::Partition(format!("index {i} assigned twice")));
                }
            }
        }
        Ok(())
    }

    pub fn datasets(&self, source: &LabeledDataset) -> Vec<LabeledDataset> {
        self.participants.iter().map(|idx| source.subset(idx)).collect()
    }

    /// Per-participant class histograms.
    pub fn histograms(&self, source: &LabeledDataset) -> Vec<Vec<usize>> {
        self.participants
            .iter()
            .map(|idx| {
                let mut h = vec![0; source.class_count];
                for &i in idx {
                    h[source.labels[i]] += 1;
                }
                h
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KdError::Config(format!("invalid plan JSON: {e}")))
    }

    pub fn digest(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }
}

/// A participant partitioning strategy.
pub trait Partitioner: Send + Sync {
    fn strategy(&self) -> PartitionStrategy;
    fn params(&self) -> PartitionParams;
    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan>;
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(KdError::Partition("need at least one participant".into()));
    }
    Ok(())
}

fn shuffled(mut v: Vec<usize>, rng: &mut Rng) -> Vec<usize> {
    v.shuffle(rng);
    v
}

/// Proportions drawn from a Dirichlet with the given concentrations.
pub fn sample_dirichlet(concentration: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let gammas: Vec<Gamma<f64>> = concentration
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0).map_err(|_| {
                KdError::Config(format!("Dirichlet concentration must be positive, got {a}"))
            })
        })
        .collect::<Result<_>>()?;
    loop {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(draws.into_iter().map(|x| x / total).collect());
        }
    }
}

/// Integer counts summing to `n`, proportional to `props` (largest remainder;
/// ties go to the lower index).
pub fn largest_remainder(props: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

// ---------------------------------------------------------------------------

/// Equal per-class counts for every participant; remainders are dropped.
#[derive(Clone, Debug, Default)]
pub struct Uniform;

impl Partitioner for Uniform {
    fn strategy(&self) -> PartitionStrategy {
        PartitionStrategy::Uniform
    }

    fn params(&self) -> PartitionParams {
        PartitionParams::default()
    }

    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
        check_k(k)?;
        let classes = data.class_indices();
        let min = classes.iter().map(Vec::len).min().unwrap_or(0);
        if min < k {
            return Err(KdError::Partition(format!(
                "uniform partition needs >= {k} samples per class, smallest class has {min}"
            )));
        }
        let mut rng = seeded(derive_seed("uniform", &[seed]));
        let mut parts = vec![Vec::new(); k];
        for idx in classes {
            let per = idx.len() / k;
            let idx = shuffled(idx, &mut rng);
            for (p, chunk) in parts.iter_mut().zip(idx.chunks_exact(per)) {
                p.extend_from_slice(chunk);
            }
        }
        Ok(PartitionPlan::new(self.strategy(), seed, self.params(), parts))
    }
}

/// Dirichlet-distributed participant sizes, class mix left random.
#[derive(Clone, Debug)]
pub struct QuantitySkew {
    pub beta: f64,
}

impl Default for QuantitySkew {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

impl QuantitySkew {
    /// Slice sizes for one Dirichlet draw: `ceil(q_i * n)` capped by what is left.
    pub fn sizes_for(proportions: &[f64], n: usize) -> Vec<usize> {
        let mut left = n;
        let last = proportions.len() - 1;
        proportions
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let want = if i == last { left } else { (q * n as f64).ceil() as usize };
                let take = want.min(left);
                left -= take;
                take
            })
            .collect()
    }
}

impl Partitioner for QuantitySkew {
    fn strategy(&self) -> PartitionStrategy {
        PartitionStrategy::QuantitySkew
    }

    fn params(&self) -> PartitionParams {
        PartitionParams {
            beta: Some(self.beta),
            ..Default::default()
        }
    }

    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
        if k < 2 {
            return Err(KdError::Partition("quantity skew needs at least 2 participants".into()));
        }
        if !(self.beta > 0.0) {
            return Err(KdError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        let n = data.len();
        if n < k {
            return Err(KdError::Partition(format!("{n} samples cannot cover {k} participants")));
        }
        let mut rng = seeded(derive_seed("quantity_skew", &[seed]));
        let order = shuffled((0..n).collect(), &mut rng);
        for _ in 0..MAX_REDRAWS {
            let q = sample_dirichlet(&vec![self.beta; k], &mut rng)?;
            let sizes = Self::sizes_for(&q, n);
            if sizes.iter().all(|&s| s >= 1) {
                let mut parts = Vec::with_capacity(k);
                let mut start = 0;
                for s in sizes {
                    parts.push(order[start..start + s].to_vec());
                    start += s;
                }
                return Ok(PartitionPlan::new(self.strategy(), seed, self.params(), parts));
            }
        }
        Err(KdError::Partition(format!(
            "no Dirichlet draw in {MAX_REDRAWS} attempts gave every participant a sample"
        )))
    }
}

/// Participant `i` is dominated by class `i`; the remainder is spread evenly.
#[derive(Clone, Debug)]
pub struct Specialized {
    pub dominant_fraction: f64,
}

impl Default for Specialized {
    fn default() -> Self {
        Self {
            dominant_fraction: 0.91,
        }
    }
}

impl Partitioner for Specialized {
    fn strategy(&self) -> PartitionStrategy {
        PartitionStrategy::Specialized
    }

    fn params(&self) -> PartitionParams {
        PartitionParams {
            dominant_fraction: Some(self.dominant_fraction),
            ..Default::default()
        }
    }

    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
        let f = self.dominant_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(KdError::Config(format!("dominant_fraction must be in (0, 1), got {f}")));
        }
        let c = data.class_count;
        if k != c {
            return Err(KdError::Partition(format!(
                "specialized partition needs one participant per class ({c}), got {k}"
            )));
        }
        // d dominant + (c-1) * r minor samples per participant, d = f/(1-f) * (c-1) * r
        let ratio = f * (c - 1) as f64 / (1.0 - f);
        let dominant = |r: usize| (ratio * r as f64).round() as usize;
        let classes = data.class_indices();
        let min = classes.iter().map(Vec::len).min().unwrap_or(0);
        let mut minor = (min as f64 / (ratio + (k - 1) as f64)).floor() as usize;
        while minor > 0 && dominant(minor) + (k - 1) * minor > min {
            minor -= 1;
        }
        if minor == 0 {
            return Err(KdError::Partition(format!(
                "smallest class has {min} samples; too few for a {f} dominant share across {k} participants"
            )));
        }
        let dom = dominant(minor);
        let mut rng = seeded(derive_seed("specialized", &[seed]));
        let mut parts = vec![Vec::new(); k];
        for (class, idx) in classes.into_iter().enumerate() {
            let idx = shuffled(idx, &mut rng);
            parts[class].extend_from_slice(&idx[..dom]);
            let mut cursor = dom;
            for (p, part) in parts.iter_mut().enumerate() {
                if p != class {
                    part.extend_from_slice(&idx[cursor..cursor + minor]);
                    cursor += minor;
                }
            }
        }
        Ok(PartitionPlan::new(self.strategy(), seed, self.params(), parts))
    }
}

/// Random class subsets with one random-size chunk per assigned class.
#[derive(Clone, Debug)]
pub struct LabelSkewChunks {
    pub min_chunk: usize,
}

impl Default for LabelSkewChunks {
    fn default() -> Self {
        Self { min_chunk: 10 }
    }
}

impl Partitioner for LabelSkewChunks {
    fn strategy(&self) -> PartitionStrategy {
        PartitionStrategy::LabelSkewChunks
    }

    fn params(&self) -> PartitionParams {
        PartitionParams {
            min_chunk: Some(self.min_chunk),
            ..Default::default()
        }
    }

    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
        check_k(k)?;
        if self.min_chunk == 0 {
            return Err(KdError::Config("min_chunk must be at least 1".into()));
        }
        let c = data.class_count;
        let mut rng = seeded(derive_seed("label_skew_chunks", &[seed]));
        let mut pools: Vec<Vec<usize>> = data
            .class_indices()
            .into_iter()
            .map(|idx| shuffled(idx, &mut rng))
            .collect();
        let mut parts = vec![Vec::new(); k];
        for (p, part) in parts.iter_mut().enumerate() {
            let wanted = rng.random_range(1..=c);
            let mut open: Vec<usize> = (0..c).filter(|&cl| pools[cl].len() >= self.min_chunk).collect();
            if open.is_empty() {
                return Err(KdError::Partition(format!(
                    "every class is exhausted before participant {p} received one"
                )));
            }
            open.shuffle(&mut rng);
            for &cl in open.iter().take(wanted) {
                let size = rng
                    .random_range(self.min_chunk..=2 * self.min_chunk)
                    .min(pools[cl].len());
                let at = pools[cl].len() - size;
                part.extend(pools[cl].drain(at..));
            }
        }
        Ok(PartitionPlan::new(self.strategy(), seed, self.params(), parts))
    }
}

/// Per-class Dirichlet split across participants.
#[derive(Clone, Debug, Default)]
pub struct LabelSkewDirichlet {
    /// Concentrations, one per participant. `None` alternates 0.1 and 0.5.
    pub betas: Option<Vec<f64>>,
}

impl LabelSkewDirichlet {
    pub fn default_betas(k: usize) -> Vec<f64> {
        (0..k).map(|i| if i % 2 == 0 { 0.1 } else { 0.5 }).collect()
    }
}

impl Partitioner for LabelSkewDirichlet {
    fn strategy(&self) -> PartitionStrategy {
        PartitionStrategy::LabelSkewDirichlet
    }

    fn params(&self) -> PartitionParams {
        PartitionParams {
            betas: self.betas.clone(),
            ..Default::default()
        }
    }

    fn partition(&self, data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
        check_k(k)?;
        let betas = self.betas.clone().unwrap_or_else(|| Self::default_betas(k));
        if betas.len() != k {
            return Err(KdError::Config(format!(
                "betas has {} entries for {k} participants",
                betas.len()
            )));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0)) {
            return Err(KdError::Config(format!("betas must be positive, got {b}")));
        }
        let classes = data.class_indices();
        if let Some(c) = classes.iter().position(Vec::is_empty) {
            return Err(KdError::Partition(format!("class {c} has no samples")));
        }
        let mut rng = seeded(derive_seed("label_skew_dirichlet", &[seed]));
        let params = PartitionParams {
            betas: Some(betas.clone()),
            ..Default::default()
        };
        for _ in 0..MAX_REDRAWS {
            let mut parts = vec![Vec::new(); k];
            for idx in &classes {
                let p = sample_dirichlet(&betas, &mut rng)?;
                let idx = shuffled(idx.clone(), &mut rng);
                let mut start = 0;
                for (part, count) in parts.iter_mut().zip(largest_remainder(&p, idx.len())) {
                    part.extend_from_slice(&idx[start..start + count]);
                    start += count;
                }
            }
            if parts.iter().all(|p| !p.is_empty()) {
                return Ok(PartitionPlan::new(self.strategy(), seed, params, parts));
            }
        }
        Err(KdError::Partition(format!(
            "no Dirichlet draw in {MAX_REDRAWS} attempts left every participant non-empty"
        )))
    }
}

pub fn partition_uniform(data: &LabeledDataset, k: usize, seed: u64) -> Result<PartitionPlan> {
    Uniform.partition(data, k, seed)
}

pub fn partition_quantity_skew(data: &LabeledDataset, k: usize, beta: f64, seed: u64) -> Result<PartitionPlan> {
    QuantitySkew { beta }.partition(data, k, seed)
}

pub fn partition_specialized(
    data: &LabeledDataset,
    k: usize,
    dominant_fraction: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    Specialized { dominant_fraction }.partition(data, k, seed)
}

pub fn partition_label_skew_chunks(
    data: &LabeledDataset,
    k: usize,
    min_chunk: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    LabelSkewChunks { min_chunk }.partition(data, k, seed)
}

pub fn partition_label_skew_dirichlet(
    data: &LabeledDataset,
    k: usize,
    betas: &[f64],
    seed: u64,
) -> Result<PartitionPlan> {
    LabelSkewDirichlet {
        betas: Some(betas.to_vec()),
    }
    .partition(data, k, seed)
}

// ---------------------------------------------------------------------------

pub type PartitionerFactory = fn(&PartitionParams) -> Result<Box<dyn Partitioner>>;

/// Name → factory table of partitioning strategies.
pub struct PartitionerRegistry {
    factories: BTreeMap<String, PartitionerFactory>,
}

impl PartitionerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registry holding the five built-in strategies.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(PartitionStrategy::Uniform.name(), |_| Ok(Box::new(Uniform)));
        reg.register(PartitionStrategy::QuantitySkew.name(), |p| {
            Ok(Box::new(QuantitySkew {
                beta: p.beta.unwrap_or(0.5),
            }))
        });
        reg.register(PartitionStrategy::Specialized.name(), |p| {
            Ok(Box::new(Specialized {
                dominant_fraction: p.dominant_fraction.unwrap_or(0.91),
            }))
        });
        reg.register(PartitionStrategy::LabelSkewChunks.name(), |p| {
            Ok(Box::new(LabelSkewChunks {
                min_chunk: p.min_chunk.unwrap_or(10),
            }))
        });
        reg.register(PartitionStrategy::LabelSkewDirichlet.name(), |p| {
            Ok(Box::new(LabelSkewDirichlet {
                betas: p.betas.clone(),
            }))
        });
        reg
    }

    pub fn register(&mut self, name: &str, factory: PartitionerFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn build(&self, name: &str, params: &PartitionParams) -> Result<Box<dyn Partitioner>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            KdError::Config(format!(
                "unknown partition strategy `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(params)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }
}

impl Default for PartitionerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
