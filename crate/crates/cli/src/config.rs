//! Run configuration: one TOML tree for every stage.
//!
//! Unknown keys are rejected. Validation collects every problem before any
//! work starts. Each stage hashes the sections it depends on (chained through
//! its prerequisite stages) so stale artifacts can be detected.

use std::fs;
use std::path::{Path, PathBuf};

use kdsim::data::{load_dataset, LabeledDataset, ToySpec, TransferOrigin};
use kdsim::distill::KdRegistry;
use kdsim::fed::FedConfig;
use kdsim::orchestrator::{ConsolidationSpec, ExperimentPlan, MatrixSpec};
use kdsim::report::ReportFormat;
use kdsim::rng::hex_digest;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; overrides `plan.seed` and `fed.seed`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub plan: ExperimentPlan,
    pub pair: PairConfig,
    pub matrix: MatrixSpec,
    pub consolidate: ConsolidationSpec,
    pub fed: FedConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("kdsim-out"),
            dataset: DatasetConfig::default(),
            plan: ExperimentPlan::default(),
            pair: PairConfig::default(),
            matrix: MatrixSpec::default(),
            consolidate: ConsolidationSpec::default(),
            fed: FedConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// CSV files when `train` is set, otherwise the generated toy blobs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    pub toy: ToySpec,
}

/// The single pair used by `distill` and `grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairConfig {
    pub teacher: usize,
    pub student: usize,
    pub method: String,
    pub transfer_option: TransferOrigin,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            teacher: 0,
            student: 1,
            method: "vanilla".into(),
            transfer_option: TransferOrigin::PublicUnlabeledLarge,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub formats: Vec<ReportFormat>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            formats: vec![ReportFormat::Csv, ReportFormat::Json],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub teacher: Option<usize>,
    pub student: Option<usize>,
    pub method: Option<String>,
    pub transfer_option: Option<TransferOrigin>,
    pub formats: Option<Vec<ReportFormat>>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string().trim_end().to_string()]))
}

/// Read, apply overrides, validate.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let base = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Validation(vec![format!("cannot read config {}: {e}", p.display())]))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    let cfg = base.with_overrides(overrides);
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Validation(errs))
    }
}

impl RunConfig {
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
            self.plan.seed = s;
            self.fed.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(t) = o.teacher {
            self.pair.teacher = t;
        }
        if let Some(s) = o.student {
            self.pair.student = s;
        }
        if let Some(m) = &o.method {
            self.pair.method = m.clone();
        }
        if let Some(t) = o.transfer_option {
            self.pair.transfer_option = t;
        }
        if let Some(f) = &o.formats {
            self.report.formats = f.clone();
        }
        self
    }

    /// Every problem with the configuration.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, s) in [("plan.seed", self.plan.seed), ("fed.seed", self.fed.seed)] {
            if s != 0 && s != self.seed {
                errs.push(format!("{name} = {s} conflicts with seed = {}; set only the top-level seed", self.seed));
            }
        }
        match (&self.dataset.train, &self.dataset.test) {
            (Some(_), None) | (None, Some(_)) => {
                errs.push("dataset.train and dataset.test must be given together".into())
            }
            (None, None) => errs.extend(self.dataset.toy.validate().into_iter().map(|e| format!("dataset.{e}"))),
            (Some(_), Some(_)) => {}
        }
        errs.extend(self.plan.validate());
        let registry = KdRegistry::builtin();
        let k = self.plan.participants;
        if self.pair.teacher == self.pair.student {
            errs.push(format!("pair.teacher and pair.student are both {}", self.pair.teacher));
        }
        for (name, v) in [("pair.teacher", self.pair.teacher), ("pair.student", self.pair.student)] {
            if v >= k {
                errs.push(format!("{name} = {v} is out of range for {k} participants"));
            }
        }
        if !registry.contains(&self.pair.method) {
            errs.push(format!(
                "pair.method: unknown method `{}` (known: {})",
                self.pair.method,
                registry.names().join(", ")
            ));
        }
        for e in self.matrix.validate(&registry) {
            errs.push(if e.starts_with("matrix.") { e } else { format!("matrix.{e}") });
        }
        if !self.matrix.methods.iter().any(|m| m == "tuned") {
            errs.extend(self.matrix.grid.validate().into_iter().map(|e| format!("matrix.{e}")));
        }
        errs.extend(self.consolidate.validate());
        errs.extend(self.fed.validate());
        if self.report.formats.is_empty() {
            errs.push("report.formats must list at least one format".into());
        }
        errs
    }

    /// The experiment plan with the master seed applied.
    pub fn effective_plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            seed: self.seed,
            ..self.plan.clone()
        }
    }

    pub fn effective_fed(&self) -> FedConfig {
        FedConfig {
            seed: self.seed,
            ..self.fed.clone()
        }
    }

    pub fn load_data(&self) -> Result<(LabeledDataset, LabeledDataset), CliError> {
        match (&self.dataset.train, &self.dataset.test) {
            (Some(train), Some(test)) => Ok((load_dataset(train)?, load_dataset(test)?)),
            _ => Ok(self.dataset.toy.generate()?),
        }
    }

    pub fn hash(&self, stage: Stage) -> String {
        let plan = self.effective_plan();
        let parts: Vec<String> = match stage {
            Stage::Partition => {
                let mut p = plan.clone();
                p.pretrain = Default::default();
                vec![json(&self.dataset), json(&p)]
            }
            Stage::Pretrain => vec![self.hash(Stage::Partition), json(&plan.pretrain)],
            Stage::Distill | Stage::Grid => vec![
                self.hash(Stage::Pretrain),
                json(&self.pair),
                json(&self.matrix.distill),
                json(&self.matrix.grid),
                json(&self.matrix.grid_mode),
                json(&self.matrix.selection),
            ],
            Stage::Matrix => vec![self.hash(Stage::Pretrain), json(&self.matrix)],
            Stage::Consolidate => vec![self.hash(Stage::Pretrain), json(&self.consolidate)],
            Stage::Fedavg => vec![self.hash(Stage::Consolidate), json(&self.effective_fed())],
            Stage::Report => vec![self.hash(Stage::Matrix), self.hash(Stage::Fedavg), json(&self.report)],
        };
        let text = format!("{}\n{}", stage.name(), parts.join("\n"));
        hex_digest(text.as_bytes())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Partition,
    Pretrain,
    Distill,
    Grid,
    Matrix,
    Consolidate,
    Fedavg,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Partition => "partition",
            Stage::Pretrain => "pretrain",
            Stage::Distill => "distill",
            Stage::Grid => "grid",
            Stage::Matrix => "matrix",
            Stage::Consolidate => "consolidate",
            Stage::Fedavg => "fedavg",
            Stage::Report => "report",
        }
    }
}
