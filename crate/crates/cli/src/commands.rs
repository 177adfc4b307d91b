use std::path::PathBuf;

use kdsim::data::{LabeledDataset, PartitionPlan, PartitionerRegistry};
use kdsim::distill::{KdRegistry, TeacherWeights};
use kdsim::fed::{federated_arms, rounds_to_target, FedTrajectory};
use kdsim::nn::{evaluate, EvalReport};
use kdsim::orchestrator::{
    best_teacher_frequency, consolidate_models, pretrain_participants, run_pair, run_pairwise_matrix,
    BestTeacherTable, GridOutcome, Participant, PairResult, Scenario,
};
use kdsim::report::emit_report;
use serde::{Deserialize, Serialize};

use crate::artifacts::{write_json, write_model, write_text, Guard, Layout};
use crate::config::{RunConfig, Stage};
use crate::error::CliError;

/// Everything a stage needs.
pub struct Context {
    pub cfg: RunConfig,
    pub layout: Layout,
    pub guard: Guard,
}

impl Context {
    pub fn new(cfg: RunConfig, force: bool) -> Self {
        let layout = Layout::new(cfg.out_dir.clone());
        Self {
            cfg,
            layout,
            guard: Guard { force },
        }
    }

    fn data(&self) -> Result<(LabeledDataset, LabeledDataset), CliError> {
        self.cfg.load_data()
    }

    /// Scenario plus pre-trained participants. The direct prerequisite is
    /// checked first so the error names the stage to run next.
    fn pretrained(&self) -> Result<(Scenario, Vec<Participant>), CliError> {
        self.guard.require(&self.layout.pretrain_summary(), Stage::Pretrain)?;
        let sc = self.scenario()?;
        let ps = self.participants(&sc)?;
        Ok((sc, ps))
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        let stored: PartitionArtifact =
            self.guard
                .read_json(&self.layout.partition(), Stage::Partition, &self.cfg.hash(Stage::Partition))?;
        let (train, test) = self.data()?;
        Ok(Scenario::with_partition(&self.cfg.effective_plan(), &train, &test, stored.plan)?)
    }

    fn participants(&self, scenario: &Scenario) -> Result<Vec<Participant>, CliError> {
        let hash = self.cfg.hash(Stage::Pretrain);
        (0..scenario.num_participants())
            .map(|k| {
                let model = self
                    .guard
                    .read_model(&self.layout.participant_model(k), Stage::Pretrain, &hash)?;
                let eval = evaluate(&model, &scenario.test)?;
                Ok(Participant {
                    id: k,
                    model,
                    eval,
                    history: None,
                })
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionArtifact {
    plan: PartitionPlan,
    /// Training-set rows held back as the validation set.
    val_indices: Vec<usize>,
    /// Training-set rows held back as the public pool.
    pool_indices: Vec<usize>,
    class_histograms: Vec<Vec<usize>>,
}

pub fn partition(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (train, test) = ctx.data()?;
    let sc = Scenario::prepare(&ctx.cfg.effective_plan(), &train, &test, &PartitionerRegistry::builtin())?;
    let artifact = PartitionArtifact {
        class_histograms: sc.participants.iter().map(LabeledDataset::class_histogram).collect(),
        plan: sc.partition,
        val_indices: sc.val_indices,
        pool_indices: sc.pool_indices,
    };
    log::info!(
        "{} participants, sizes {:?}",
        artifact.plan.num_participants(),
        artifact.plan.sizes()
    );
    let path = ctx.layout.partition();
    write_json(&path, &ctx.cfg.hash(Stage::Partition), &artifact)?;
    Ok(vec![path])
}

#[derive(Serialize, Deserialize)]
struct PretrainRow {
    id: usize,
    samples: usize,
    epochs_run: usize,
    best_epoch: usize,
    eval: EvalReport,
}

pub fn pretrain(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let sc = ctx.scenario()?;
    let ps = pretrain_participants(&sc)?;
    let hash = ctx.cfg.hash(Stage::Pretrain);
    let mut written = Vec::new();
    let mut rows = Vec::new();
    for p in &ps {
        let path = ctx.layout.participant_model(p.id);
        write_model(&path, &hash, &p.model)?;
        written.push(path);
        let h = p.history.as_ref();
        rows.push(PretrainRow {
            id: p.id,
            samples: sc.participants[p.id].len(),
            epochs_run: h.map_or(0, |h| h.epochs_run()),
            best_epoch: h.map_or(0, |h| h.best_epoch),
            eval: p.eval.clone(),
        });
        log::info!("participant {}: test accuracy {:.4}", p.id, p.eval.overall_accuracy);
    }
    let path = ctx.layout.pretrain_summary();
    write_json(&path, &hash, &rows)?;
    written.push(path);
    Ok(written)
}

fn single_pair(ctx: &Context, stage: Stage, method_name: &str) -> Result<Vec<PathBuf>, CliError> {
    let (sc, ps) = ctx.pretrained()?;
    let registry = KdRegistry::builtin();
    let method = registry.get(method_name)?;
    let pair = &ctx.cfg.pair;
    let (result, model) = run_pair(
        &sc,
        &ps,
        &ctx.cfg.matrix,
        method.as_ref(),
        pair.transfer_option,
        pair.teacher,
        pair.student,
    )?;
    log::info!(
        "{} {} -> {}: gain {:+.2} points",
        method_name,
        pair.teacher,
        pair.student,
        result.gain_points
    );
    let hash = ctx.cfg.hash(stage);
    let stem = ctx
        .layout
        .pair_stem(stage, method_name, pair.transfer_option.name(), pair.teacher, pair.student);
    let json = stem.with_extension("json");
    let kdsm = stem.with_extension("kdsm");
    write_json(&json, &hash, &result)?;
    write_model(&kdsm, &hash, &model)?;
    let mut written = vec![json, kdsm];
    if let Some(grid) = &result.grid {
        let csv = stem.with_extension("surface.csv");
        write_text(&csv, &surface_csv(grid))?;
        written.push(csv);
    }
    Ok(written)
}

fn surface_csv(grid: &GridOutcome) -> String {
    let mut out = String::from("T,alpha,gain_points\n");
    for c in &grid.surface {
        out.push_str(&format!("{},{},{}\n", c.temperature, c.alpha, c.gain));
    }
    out
}

pub fn distill(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    single_pair(ctx, Stage::Distill, &ctx.cfg.pair.method)
}

pub fn grid(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    single_pair(ctx, Stage::Grid, "tuned")
}

pub fn matrix(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (sc, ps) = ctx.pretrained()?;
    let results = run_pairwise_matrix(&sc, &ps, &ctx.cfg.matrix, &KdRegistry::builtin())?;
    log::info!("{} pair results", results.len());
    let hash = ctx.cfg.hash(Stage::Matrix);
    let path = ctx.layout.matrix_results();
    write_json(&path, &hash, &results)?;
    let mut tables: Vec<(String, String, BestTeacherTable)> = Vec::new();
    for method in &ctx.cfg.matrix.methods {
        for option in &ctx.cfg.matrix.transfer_options {
            let subset: Vec<PairResult> = results
                .iter()
                .filter(|r| &r.method == method && r.transfer_option == *option)
                .cloned()
                .collect();
            tables.push((method.clone(), option.name().to_string(), best_teacher_frequency(&subset)?));
        }
    }
    let best = ctx.layout.best_teachers();
    write_json(&best, &hash, &tables)?;
    Ok(vec![path, best])
}

#[derive(Serialize, Deserialize)]
struct ConsolidateSummary {
    start_id: Option<usize>,
    teacher_ids: Vec<usize>,
    weights: TeacherWeights,
    start_eval: EvalReport,
    eval: EvalReport,
}

pub fn consolidate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (sc, ps) = ctx.pretrained()?;
    let out = consolidate_models(&sc, &ps, &ctx.cfg.consolidate)?;
    log::info!(
        "consolidated accuracy {:.4} (start {:.4})",
        out.eval.overall_accuracy,
        out.start_eval.overall_accuracy
    );
    let hash = ctx.cfg.hash(Stage::Consolidate);
    let model = ctx.layout.consolidated_model();
    write_model(&model, &hash, &out.model)?;
    let summary = ctx.layout.consolidate_summary();
    write_json(
        &summary,
        &hash,
        &ConsolidateSummary {
            start_id: out.start_id,
            teacher_ids: out.teacher_ids,
            weights: out.weights,
            start_eval: out.start_eval,
            eval: out.eval,
        },
    )?;
    Ok(vec![model, summary])
}

#[derive(Serialize, Deserialize)]
struct FedArtifact {
    random: FedTrajectory,
    preconsolidated: FedTrajectory,
    /// Random arm's final accuracy.
    target: f64,
    random_rounds_to_target: Option<usize>,
    preconsolidated_rounds_to_target: Option<usize>,
}

pub fn fedavg(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let consolidated = ctx.guard.read_model(
        &ctx.layout.consolidated_model(),
        Stage::Consolidate,
        &ctx.cfg.hash(Stage::Consolidate),
    )?;
    let sc = ctx.scenario()?;
    let (random, preconsolidated) = federated_arms(&sc, &consolidated, &ctx.cfg.effective_fed())?;
    let target = random.final_accuracy().unwrap_or(0.0);
    let artifact = FedArtifact {
        random_rounds_to_target: rounds_to_target(&random, target),
        preconsolidated_rounds_to_target: rounds_to_target(&preconsolidated, target),
        target,
        random,
        preconsolidated,
    };
    log::info!(
        "rounds to {:.4}: random {:?}, preconsolidated {:?}",
        target,
        artifact.random_rounds_to_target,
        artifact.preconsolidated_rounds_to_target
    );
    let path = ctx.layout.fed_trajectories();
    write_json(&path, &ctx.cfg.hash(Stage::Fedavg), &artifact)?;
    Ok(vec![path])
}

pub fn report(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let results: Vec<PairResult> =
        ctx.guard
            .read_json(&ctx.layout.matrix_results(), Stage::Matrix, &ctx.cfg.hash(Stage::Matrix))?;
    let fed_path = ctx.layout.fed_trajectories();
    let trajectories = if fed_path.exists() {
        let fed: FedArtifact = ctx.guard.read_json(&fed_path, Stage::Fedavg, &ctx.cfg.hash(Stage::Fedavg))?;
        vec![fed.random, fed.preconsolidated]
    } else {
        log::info!("no federated trajectories at {}; reporting pair results only", fed_path.display());
        Vec::new()
    };
    let written = emit_report(&results, &trajectories, &ctx.cfg.report.formats, &ctx.layout.report_dir())?;
    Ok(written)
}
