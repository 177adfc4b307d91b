use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{GridMode, GridOutcome, GridSpec};
use super::plan::{Participant, Scenario};
use crate::data::{build_transfer_set, TransferOrigin, TransferSet};
use crate::distill::{DistillConfig, KdMethod, KdRegistry, PairTask};
use crate::error::{KdError, Result};
use crate::metrics::{learning_forgetting, GainRecord};
use crate::nn::{evaluate, EvalReport, Model};
use crate::rng::{derive_seed, tag_code};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherStrength {
    Weak,
    Comparable,
    Strong,
}

impl TeacherStrength {
    /// From teacher accuracy minus student accuracy.
    pub fn from_delta(delta: f64) -> Self {
        if delta > 0.0 {
            TeacherStrength::Strong
        } else if delta < 0.0 {
            TeacherStrength::Weak
        } else {
            TeacherStrength::Comparable
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TeacherStrength::Weak => "weak",
            TeacherStrength::Comparable => "comparable",
            TeacherStrength::Strong => "strong",
        }
    }
}

impl fmt::Display for TeacherStrength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Labeled set used to score grid cells for tuned KD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSet {
    /// The shared test set, the same set gains are reported on.
    #[default]
    Test,
    Validation,
}

/// Methods, transfer options and hyperparameters of a pairwise run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSpec {
    pub methods: Vec<String>,
    pub transfer_options: Vec<TransferOrigin>,
    pub distill: DistillConfig,
    pub grid: GridSpec,
    pub grid_mode: GridMode,
    pub selection: SelectionSet,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            methods: vec!["vanilla".into()],
            transfer_options: vec![TransferOrigin::PublicUnlabeledLarge],
            distill: DistillConfig::vanilla(),
            grid: GridSpec::reference(),
            grid_mode: GridMode::Full,
            selection: SelectionSet::Test,
        }
    }
}

impl MatrixSpec {
    pub fn validate(&self, registry: &KdRegistry) -> Vec<String> {
        let mut errs = Vec::new();
        if self.methods.is_empty() {
            errs.push("matrix.methods must name at least one method".into());
        }
        for m in &self.methods {
            if !registry.contains(m) {
                errs.push(format!(
                    "matrix.methods: unknown method `{m}` (known: {})",
                    registry.names().join(", ")
                ));
            }
        }
        if self.transfer_options.is_empty() {
            errs.push("matrix.transfer_options must list at least one option".into());
        }
        errs.extend(self.distill.validate());
        if self.methods.iter().any(|m| m == "tuned") {
            errs.extend(self.grid.validate());
        }
        errs
    }
}

/// One teacher-to-student transfer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub scenario: String,
    pub method: String,
    pub transfer_option: TransferOrigin,
    pub teacher_id: usize,
    pub student_id: usize,
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    pub pre: EvalReport,
    pub post: EvalReport,
    pub teacher: EvalReport,
    pub gain_points: f64,
    pub strength_delta: f64,
    pub strength: TeacherStrength,
    pub learning: Vec<f64>,
    pub forgetting: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PairResult {
    pub fn build(
        base: PairKey<'_>,
        pre: &EvalReport,
        post: EvalReport,
        teacher: &EvalReport,
    ) -> Result<Self> {
        let gain = GainRecord::new(pre, &post, teacher)?;
        let lf = learning_forgetting(pre, &post)?;
        Ok(Self {
            scenario: base.scenario.to_string(),
            method: base.method.to_string(),
            transfer_option: base.option,
            teacher_id: base.teacher,
            student_id: base.student,
            temperature: None,
            alpha: None,
            pre: pre.clone(),
            post,
            teacher: teacher.clone(),
            gain_points: gain.gain_points,
            strength_delta: gain.strength_delta,
            strength: TeacherStrength::from_delta(gain.strength_delta),
            learning: lf.learning,
            forgetting: lf.forgetting,
            grid: None,
            warnings: Vec::new(),
        })
    }

    /// Canonical ordering key.
    pub fn sort_key(&self) -> (String, TransferOrigin, usize, usize) {
        (self.method.clone(), self.transfer_option, self.teacher_id, self.student_id)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PairKey<'a> {
    pub scenario: &'a str,
    pub method: &'a str,
    pub option: TransferOrigin,
    pub teacher: usize,
    pub student: usize,
}

/// Seed shared by every run of a method family on one ordered pair.
pub fn pair_seed(master: u64, teacher: usize, student: usize, family: &str) -> u64 {
    derive_seed("pair", &[master, teacher as u64, student as u64, tag_code(family)])
}

/// Public options draw the same transfer set for every student.
pub fn transfer_for(scenario: &Scenario, option: TransferOrigin, student: usize) -> Result<TransferSet> {
    build_transfer_set(
        option,
        &scenario.public_pool,
        &scenario.participants[student],
        &scenario.plan.transfer_sizes,
        derive_seed("transfer", &[scenario.plan.seed]),
    )
}

fn distill_pair(
    scenario: &Scenario,
    models: &[Participant],
    spec: &MatrixSpec,
    method: &dyn KdMethod,
    option: TransferOrigin,
    (t, s): (usize, usize),
    transfer: &TransferSet,
) -> Result<(PairResult, Model)> {
    let selection = match spec.selection {
        SelectionSet::Test => &scenario.test,
        SelectionSet::Validation => &scenario.validation,
    };
    let task = PairTask {
        student: &models[s].model,
        teacher: &models[t].model,
        transfer,
        selection,
        config: &spec.distill,
        grid: &spec.grid,
        grid_mode: spec.grid_mode,
        seed: pair_seed(scenario.plan.seed, t, s, method.seed_family()),
    };
    let out = method.distill(&task)?;
    let post = evaluate(&out.model, &scenario.test)?;
    let key = PairKey {
        scenario: &scenario.plan.name,
        method: method.name(),
        option,
        teacher: t,
        student: s,
    };
    let mut r = PairResult::build(key, &models[s].eval, post, &models[t].eval)?;
    r.temperature = out.temperature;
    r.alpha = out.alpha;
    r.grid = out.grid;
    r.warnings = out.warnings;
    Ok((r, out.model))
}

/// One ordered pair, identical to the matching record of a full matrix run.
/// Also returns the distilled student.
pub fn run_pair(
    scenario: &Scenario,
    models: &[Participant],
    spec: &MatrixSpec,
    method: &dyn KdMethod,
    option: TransferOrigin,
    teacher: usize,
    student: usize,
) -> Result<(PairResult, Model)> {
    let k = models.len();
    if teacher == student || teacher >= k || student >= k {
        return Err(KdError::Config(format!(
            "invalid pair teacher={teacher} student={student} for {k} participants"
        )));
    }
    let transfer = transfer_for(scenario, option, student)?;
    distill_pair(scenario, models, spec, method, option, (teacher, student), &transfer)
}

/// Distill every ordered teacher/student pair (teacher != student) for every
/// method and transfer option. Students always start from their pre-trained
/// state. Output is sorted by (method, option, teacher, student).
pub fn run_pairwise_matrix(
    scenario: &Scenario,
    models: &[Participant],
    spec: &MatrixSpec,
    registry: &KdRegistry,
) -> Result<Vec<PairResult>> {
    if models.len() < 2 {
        return Err(KdError::Config(format!(
            "pairwise matrix needs at least 2 models, got {}",
            models.len()
        )));
    }
    if models.len() != scenario.num_participants() {
        return Err(KdError::Config(format!(
            "{} models for {} participants",
            models.len(),
            scenario.num_participants()
        )));
    }
    if let Some(e) = spec.validate(registry).into_iter().next() {
        return Err(KdError::Config(e));
    }
    let k = models.len();
    let mut transfer: BTreeMap<(TransferOrigin, usize), TransferSet> = BTreeMap::new();
    for &option in &spec.transfer_options {
        for s in 0..k {
            let ts = if option.is_public() && s > 0 {
                transfer[&(option, 0)].clone()
            } else {
                transfer_for(scenario, option, s)?
            };
            transfer.insert((option, s), ts);
        }
    }
    let mut tasks = Vec::new();
    for method in &spec.methods {
        for &option in &spec.transfer_options {
            for t in 0..k {
                for s in (0..k).filter(|&s| s != t) {
                    tasks.push((method.as_str(), option, t, s));
                }
            }
        }
    }
    let mut results = tasks
        .into_par_iter()
        .map(|(method_name, option, t, s)| {
            let method = registry.get(method_name)?;
            distill_pair(scenario, models, spec, method.as_ref(), option, (t, s), &transfer[&(option, s)])
                .map(|(r, _)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(results)
}

/// For each student, the teacher with the largest gain (ties to the lowest id).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestTeacherTable {
    /// student id -> best teacher id
    pub best_for_student: BTreeMap<usize, usize>,
    /// teacher id -> number of students it is best for
    pub counts: BTreeMap<usize, usize>,
}

pub fn best_teacher_frequency(results: &[PairResult]) -> Result<BestTeacherTable> {
    if results.is_empty() {
        return Err(KdError::Data("no pair results to rank".into()));
    }
    let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in results {
        counts.entry(r.teacher_id).or_insert(0);
        let entry = best.entry(r.student_id).or_insert((r.teacher_id, r.gain_points));
        if r.gain_points > entry.1 || (r.gain_points == entry.1 && r.teacher_id < entry.0) {
            *entry = (r.teacher_id, r.gain_points);
        }
    }
    let best_for_student: BTreeMap<usize, usize> = best.into_iter().map(|(s, (t, _))| (s, t)).collect();
    for &t in best_for_student.values() {
        *counts.entry(t).or_insert(0) += 1;
    }
    Ok(BestTeacherTable {
        best_for_student,
        counts,
    })
}
