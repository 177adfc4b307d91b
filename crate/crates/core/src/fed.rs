//! Cross-silo federated averaging and the pre-consolidated comparison.

use std::fmt;
use std::time::Instant;

use ndarray::Zip;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{KdError, Result};
use crate::nn::{evaluate, fit, Model, Supervised, TrainConfig};
use crate::orchestrator::{consolidate_models, Consolidated, ConsolidationSpec, Participant, Scenario};
use crate::rng::{derive_seed, hex_digest, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub participation_rate: f64,
    pub local: TrainConfig,
    pub seed: u64,
}

impl Default for FedConfig {
    /// Full participation, 2 local SGD epochs per round.
    fn default() -> Self {
        Self {
            rounds: 100,
            local_epochs: 2,
            participation_rate: 1.0,
            local: TrainConfig::federated_local(),
            seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.rounds == 0 {
            errs.push("fed.rounds must be at least 1".into());
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            errs.push(format!(
                "fed.participation_rate must be in (0, 1], got {}",
                self.participation_rate
            ));
        }
        errs.extend(self.local.validate().into_iter().map(|e| format!("fed.local: {e}")));
        errs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitTag {
    Random,
    Preconsolidated,
}

impl InitTag {
    pub fn name(self) -> &'static str {
        match self {
            InitTag::Random => "random",
            InitTag::Preconsolidated => "preconsolidated",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [InitTag::Random, InitTag::Preconsolidated]
            .into_iter()
            .find(|t| t.name() == name)
    }
}

impl fmt::Display for InitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedTrajectory {
    pub init_tag: InitTag,
    /// Test accuracy of the initial global model.
    pub initial_accuracy: f64,
    /// Test accuracy after each round.
    pub accuracies: Vec<f64>,
    /// Seconds spent per round; not persisted.
    #[serde(skip)]
    pub wall_times: Vec<f64>,
    /// Clients that contributed to each round's aggregate.
    pub contributions: Vec<Vec<usize>>,
    /// Digest of everything but the initial model.
    pub setup_digest: String,
}

impl FedTrajectory {
    pub fn rounds(&self) -> usize {
        self.accuracies.len()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.accuracies.last().copied()
    }
}

/// Size-weighted parameter mean `sum_k (n_k / N) p_k`, accumulated in client
/// order starting from `(n_0 / N) p_0`.
pub fn fedavg_aggregate(models: &[Model], sizes: &[usize]) -> Result<Model> {
    let first = models
        .first()
        .ok_or_else(|| KdError::Config("aggregation needs at least one model".into()))?;
    if models.len() != sizes.len() {
        return Err(KdError::Config(format!(
            "{} models but {} sizes",
            models.len(),
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(KdError::Config("client sizes must be positive".into()));
    }
    if let Some(i) = models.iter().position(|m| !m.same_shape(first)) {
        return Err(KdError::Shape(format!("client {i} architecture differs from client 0")));
    }
    let total = sizes.iter().sum::<usize>() as f64;
    let mut out = first.clone();
    let share = sizes[0] as f64 / total;
    for w in &mut out.weights {
        w.mapv_inplace(|x| share * x);
    }
    for b in &mut out.biases {
        b.mapv_inplace(|x| share * x);
    }
    for (m, &n) in models.iter().zip(sizes).skip(1) {
        let share = n as f64 / total;
        for (acc, w) in out.weights.iter_mut().zip(&m.weights) {
            Zip::from(acc).and(w).for_each(|a, &x| *a += share * x);
        }
        for (acc, b) in out.biases.iter_mut().zip(&m.biases) {
            Zip::from(acc).and(b).for_each(|a, &x| *a += share * x);
        }
    }
    Ok(out)
}

/// Shuffle seed of `client`'s local training in `round`.
pub fn local_seed(seed: u64, round: usize, client: usize) -> u64 {
    derive_seed("local", &[seed, round as u64, client as u64])
}

fn participating(cfg: &FedConfig, round: usize, clients: usize) -> Vec<usize> {
    if cfg.participation_rate >= 1.0 {
        return (0..clients).collect();
    }
    let m = ((cfg.participation_rate * clients as f64).ceil() as usize).clamp(1, clients);
    let mut rng = seeded(derive_seed("participation", &[cfg.seed, round as u64]));
    let mut picked = sample(&mut rng, clients, m).into_vec();
    picked.sort_unstable();
    picked
}

pub fn setup_digest(clients: &[LabeledDataset], test: &LabeledDataset, cfg: &FedConfig) -> String {
    let mut bytes = serde_json::to_vec(cfg).expect("config serializes");
    for d in clients.iter().chain(std::iter::once(test)) {
        bytes.extend((d.len() as u64).to_le_bytes());
        bytes.extend(d.labels.iter().flat_map(|&y| (y as u64).to_le_bytes()));
        bytes.extend(d.features.iter().flat_map(|x| x.to_le_bytes()));
    }
    hex_digest(&bytes)
}

/// FedAvg: broadcast, local training on every participating client,
/// size-weighted aggregation, test evaluation, for `cfg.rounds` rounds.
pub fn run_federated(
    init: &Model,
    clients: &[LabeledDataset],
    test: &LabeledDataset,
    cfg: &FedConfig,
    init_tag: InitTag,
) -> Result<FedTrajectory> {
    if clients.is_empty() {
        return Err(KdError::Config("federation needs at least one client".into()));
    }
    if let Some(i) = clients.iter().position(LabeledDataset::is_empty) {
        return Err(KdError::Data(format!("client {i} has no data")));
    }
    if let Some(e) = cfg.validate().into_iter().next() {
        return Err(KdError::Config(e));
    }
    let initial_accuracy = evaluate(init, test)?.overall_accuracy;
    let mut global = init.clone();
    let mut accuracies = Vec::with_capacity(cfg.rounds);
    let mut wall_times = Vec::with_capacity(cfg.rounds);
    let mut contributions = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let started = Instant::now();
        let picked = participating(cfg, round, clients.len());
        let locals = picked
            .par_iter()
            .map(|&c| {
                let mut local = global.clone();
                let objective = Supervised {
                    labels: &clients[c].labels,
                };
                fit(
                    &mut local,
                    &clients[c].features,
                    &objective,
                    &cfg.local,
                    cfg.local_epochs,
                    local_seed(cfg.seed, round, c),
                )?;
                Ok(local)
            })
            .collect::<Result<Vec<_>>>()?;
        let sizes: Vec<usize> = picked.iter().map(|&c| clients[c].len()).collect();
        global = fedavg_aggregate(&locals, &sizes)?;
        accuracies.push(evaluate(&global, test)?.overall_accuracy);
        wall_times.push(started.elapsed().as_secs_f64());
        contributions.push(picked);
    }
    Ok(FedTrajectory {
        init_tag,
        initial_accuracy,
        accuracies,
        wall_times,
        contributions,
        setup_digest: setup_digest(clients, test, cfg),
    })
}

/// 1-indexed first round at or above `target`.
pub fn rounds_to_target(traj: &FedTrajectory, target: f64) -> Option<usize> {
    traj.accuracies.iter().position(|&a| a >= target).map(|i| i + 1)
}

pub struct FedComparison {
    pub random: FedTrajectory,
    pub preconsolidated: FedTrajectory,
    pub consolidated: Consolidated,
}

/// `(random, preconsolidated)` trajectories over the scenario's participants.
pub fn federated_arms(
    scenario: &Scenario,
    consolidated: &Model,
    cfg: &FedConfig,
) -> Result<(FedTrajectory, FedTrajectory)> {
    let random_init = Model::init(&scenario.arch, derive_seed("fed-init", &[cfg.seed]))?;
    let random = run_federated(&random_init, &scenario.participants, &scenario.test, cfg, InitTag::Random)?;
    let preconsolidated = run_federated(
        consolidated,
        &scenario.participants,
        &scenario.test,
        cfg,
        InitTag::Preconsolidated,
    )?;
    Ok((random, preconsolidated))
}

/// Run FedAvg twice over the scenario's participants: once from a random
/// model and once from the consolidated model. Everything else is shared.
pub fn preconsolidated_fedavg(
    scenario: &Scenario,
    models: &[Participant],
    consolidation: &ConsolidationSpec,
    cfg: &FedConfig,
) -> Result<FedComparison> {
    let consolidated = consolidate_models(scenario, models, consolidation)?;
    let (random, preconsolidated) = federated_arms(scenario, &consolidated.model, cfg)?;
    Ok(FedComparison {
        random,
        preconsolidated,
        consolidated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(acc: &[f64]) -> FedTrajectory {
        FedTrajectory {
            init_tag: InitTag::Random,
            initial_accuracy: 0.0,
            accuracies: acc.to_vec(),
            wall_times: vec![],
            contributions: vec![],
            setup_digest: String::new(),
        }
    }

    #[test]
    fn first_crossing_round() {
        let t = traj(&[0.10, 0.50, 0.70, 0.80]);
        assert_eq!(rounds_to_target(&t, 0.70), Some(3));
        assert_eq!(rounds_to_target(&t, 0.95), None);
        assert_eq!(rounds_to_target(&t, 0.10), Some(1));
    }

    #[test]
    fn partial_participation_samples_without_replacement() {
        let cfg = FedConfig {
            participation_rate: 0.3,
            ..FedConfig::default()
        };
        let p = participating(&cfg, 4, 10);
        assert_eq!(p.len(), 3);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(participating(&FedConfig::default(), 0, 4), vec![0, 1, 2, 3]);
    }
}
