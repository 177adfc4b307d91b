//! Pairwise KD methods behind a common trait, looked up by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::dml::distill_dml;
use super::dpkd::distill_dpkd;
use super::vanilla::{distill_vanilla, DistillConfig};
use crate::data::{LabeledDataset, TransferSet};
use crate::error::{KdError, Result};
use crate::metrics::accuracy_gain;
use crate::nn::{evaluate, Model};
use crate::orchestrator::grid::{grid_search_tuned, GridMode, GridOutcome, GridSpec};

/// Everything a method needs to transfer one teacher into one student.
pub struct PairTask<'a> {
    pub student: &'a Model,
    pub teacher: &'a Model,
    pub transfer: &'a TransferSet,
    /// Labeled set used to score candidate hyperparameters.
    pub selection: &'a LabeledDataset,
    pub config: &'a DistillConfig,
    pub grid: &'a GridSpec,
    pub grid_mode: GridMode,
    pub seed: u64,
}

/// The distilled student plus the settings that produced it.
#[derive(Clone, Debug)]
pub struct PairDistillation {
    pub model: Model,
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    pub warnings: Vec<String>,
    pub grid: Option<GridOutcome>,
}

pub trait KdMethod: Send + Sync {
    fn name(&self) -> &str;

    /// Methods that share a family draw identical shuffles for a given pair.
    fn seed_family(&self) -> &str {
        self.name()
    }

    fn distill(&self, task: &PairTask) -> Result<PairDistillation>;
}

/// Fixed-(T, alpha) teacher-student distillation.
pub struct VanillaKd;

impl KdMethod for VanillaKd {
    fn name(&self) -> &str {
        "vanilla"
    }

    fn distill(&self, task: &PairTask) -> Result<PairDistillation> {
        let out = distill_vanilla(task.student, &[task.teacher], task.transfer, task.config, task.seed)?;
        Ok(PairDistillation {
            model: out.model,
            temperature: Some(task.config.temperature),
            alpha: Some(task.config.alpha),
            warnings: out.warnings,
            grid: None,
        })
    }
}

/// Vanilla distillation with (T, alpha) picked by grid search on the
/// selection set. Shares the vanilla seed family, so the grid cell matching
/// the vanilla settings reproduces the vanilla run exactly.
pub struct TunedKd;

impl KdMethod for TunedKd {
    fn name(&self) -> &str {
        "tuned"
    }

    fn seed_family(&self) -> &str {
        "vanilla"
    }

    fn distill(&self, task: &PairTask) -> Result<PairDistillation> {
        let pre = evaluate(task.student, task.selection)?;
        let mut models: Vec<((f64, f64), Model)> = Vec::new();
        let mut score = |t: f64, a: f64| -> Result<f64> {
            let cfg = task.config.with_params(t, a);
            let out = distill_vanilla(task.student, &[task.teacher], task.transfer, &cfg, task.seed)?;
            let post = evaluate(&out.model, task.selection)?;
            models.push(((t, a), out.model));
            accuracy_gain(&pre, &post)
        };
        let grid = grid_search_tuned(task.grid, task.grid_mode, &mut score)?;
        let key = (grid.best_temperature, grid.best_alpha);
        let model = models
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, m)| m)
            .expect("best cell was evaluated");
        Ok(PairDistillation {
            model,
            temperature: Some(key.0),
            alpha: Some(key.1),
            warnings: Vec::new(),
            grid: Some(grid),
        })
    }
}

/// Deep mutual learning; the student (whose data is the transfer set) is kept.
pub struct DmlKd;

impl KdMethod for DmlKd {
    fn name(&self) -> &str {
        "dml"
    }

    fn distill(&self, task: &PairTask) -> Result<PairDistillation> {
        let out = distill_dml(task.student, task.teacher, task.transfer, task.transfer, task.config, task.seed)?;
        Ok(PairDistillation {
            model: out.first,
            temperature: None,
            alpha: None,
            warnings: out.warnings,
            grid: None,
        })
    }
}

/// Data-partitioning KD with masks toward teacher or frozen self.
pub struct DpKd;

impl KdMethod for DpKd {
    fn name(&self) -> &str {
        "dpkd"
    }

    fn distill(&self, task: &PairTask) -> Result<PairDistillation> {
        let out = distill_dpkd(task.student, task.teacher, task.transfer, task.config, task.seed)?;
        Ok(PairDistillation {
            model: out.outcome.model,
            temperature: Some(task.config.temperature),
            alpha: None,
            warnings: out.outcome.warnings,
            grid: None,
        })
    }
}

/// Name → method table.
#[derive(Clone)]
pub struct KdRegistry {
    methods: BTreeMap<String, Arc<dyn KdMethod>>,
}

impl KdRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    /// `vanilla`, `tuned`, `dml`, `dpkd`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(VanillaKd));
        reg.register(Arc::new(TunedKd));
        reg.register(Arc::new(DmlKd));
        reg.register(Arc::new(DpKd));
        reg
    }

    pub fn register(&mut self, method: Arc<dyn KdMethod>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn KdMethod>> {
        self.methods.get(name).cloned().ok_or_else(|| {
            KdError::Config(format!(
                "unknown KD method `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.methods.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.methods.contains_key(name)
    }
}

impl Default for KdRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
