use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    split_indices, LabeledDataset, PartitionParams, PartitionPlan, PartitionerRegistry, TransferSizes,
};
use crate::error::{KdError, Result};
use crate::nn::{evaluate, train_supervised, ArchSpec, EvalReport, Model, TrainConfig, TrainHistory};
use crate::rng::{derive_seed, seeded};

/// One simulated deployment: how data is split among participants and how
/// each participant pre-trains its model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub name: String,
    pub participants: usize,
    pub strategy: String,
    pub params: PartitionParams,
    pub val_fraction: f64,
    pub transfer_sizes: TransferSizes,
    pub hidden_layers: Vec<usize>,
    pub pretrain: TrainConfig,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            name: "toy".into(),
            participants: 10,
            strategy: "uniform".into(),
            params: PartitionParams::default(),
            val_fraction: 0.1,
            transfer_sizes: TransferSizes::desk_scale(),
            hidden_layers: vec![64],
            pretrain: TrainConfig::pretraining(),
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.participants < 2 {
            errs.push(format!("plan.participants must be at least 2, got {}", self.participants));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            errs.push(format!("plan.val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if self.hidden_layers.contains(&0) {
            errs.push("plan.hidden_layers widths must be at least 1".into());
        }
        if !PartitionerRegistry::builtin().contains(&self.strategy) {
            errs.push(format!("plan.strategy `{}` is not a known partition strategy", self.strategy));
        }
        errs.extend(self.pretrain.validate().into_iter().map(|e| format!("plan.pretrain: {e}")));
        errs
    }

    pub fn arch(&self, data: &LabeledDataset) -> ArchSpec {
        ArchSpec::new(data.dim(), self.hidden_layers.clone(), data.class_count)
    }
}

/// Training data carved into validation, public pool and participant shards.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub plan: ExperimentPlan,
    pub arch: ArchSpec,
    pub partition: PartitionPlan,
    /// Rows of the original training set that feed the partitioner.
    pub source_indices: Vec<usize>,
    pub pool_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub participants: Vec<LabeledDataset>,
    pub validation: LabeledDataset,
    pub public_pool: LabeledDataset,
    pub test: LabeledDataset,
}

struct Carved {
    source: Vec<usize>,
    pool: Vec<usize>,
    val: Vec<usize>,
}

fn carve(plan: &ExperimentPlan, train: &LabeledDataset) -> Result<Carved> {
    let (rest, val) = split_indices(train, plan.val_fraction, derive_seed("val", &[plan.seed]))?;
    let pool_size = plan.transfer_sizes.pool_size();
    if pool_size >= rest.len() {
        return Err(KdError::Config(format!(
            "public pool of {pool_size} leaves no data for participants ({} rows after validation)",
            rest.len()
        )));
    }
    let mut rng = seeded(derive_seed("pool", &[plan.seed]));
    let picked: BTreeSet<usize> = sample(&mut rng, rest.len(), pool_size)
        .into_iter()
        .map(|i| rest[i])
        .collect();
    let source = rest.iter().copied().filter(|i| !picked.contains(i)).collect();
    Ok(Carved {
        source,
        pool: picked.into_iter().collect(),
        val,
    })
}

impl Scenario {
    /// Split, carve the public pool and partition with the named strategy.
    pub fn prepare(
        plan: &ExperimentPlan,
        train: &LabeledDataset,
        test: &LabeledDataset,
        registry: &PartitionerRegistry,
    ) -> Result<Self> {
        if let Some(e) = plan.validate().into_iter().next() {
            return Err(KdError::Config(e));
        }
        let carved = carve(plan, train)?;
        let source = train.subset(&carved.source);
        let partitioner = registry.build(&plan.strategy, &plan.params)?;
        let partition =
            partitioner.partition(&source, plan.participants, derive_seed("partition", &[plan.seed]))?;
        Self::assemble(plan, train, test, carved, partition)
    }

    /// Rebuild around a previously persisted partition.
    pub fn with_partition(
        plan: &ExperimentPlan,
        train: &LabeledDataset,
        test: &LabeledDataset,
        partition: PartitionPlan,
    ) -> Result<Self> {
        let carved = carve(plan, train)?;
        if partition.num_participants() != plan.participants {
            return Err(KdError::Config(format!(
                "partition has {} participants, plan expects {}",
                partition.num_participants(),
                plan.participants
            )));
        }
        Self::assemble(plan, train, test, carved, partition)
    }

    fn assemble(
        plan: &ExperimentPlan,
        train: &LabeledDataset,
        test: &LabeledDataset,
        carved: Carved,
        partition: PartitionPlan,
    ) -> Result<Self> {
        if test.is_empty() {
            return Err(KdError::Data("test set is empty".into()));
        }
        if test.dim() != train.dim() {
            return Err(KdError::Shape(format!(
                "test set has {} features, training set {}",
                test.dim(),
                train.dim()
            )));
        }
        let source = train.subset(&carved.source);
        partition.validate(source.len())?;
        let test = test.clone().with_class_count(train.class_count.max(test.class_count))?;
        let train_cc = test.class_count;
        let participants = partition
            .datasets(&source)
            .into_iter()
            .map(|d| d.with_class_count(train_cc))
            .collect::<Result<Vec<_>>>()?;
        let validation = train.subset(&carved.val).with_class_count(train_cc)?;
        let public_pool = train.subset(&carved.pool).with_class_count(train_cc)?;
        let arch = ArchSpec::new(train.dim(), plan.hidden_layers.clone(), train_cc);
        arch.validate()?;
        Ok(Self {
            plan: plan.clone(),
            arch,
            partition,
            source_indices: carved.source,
            pool_indices: carved.pool,
            val_indices: carved.val,
            participants,
            validation,
            public_pool,
            test,
        })
    }

    pub fn num_participants(&self) -> usize {
        self.participants.len()
    }

    /// Original training-set rows held by participant `k`.
    pub fn participant_rows(&self, k: usize) -> Vec<usize> {
        self.partition.participants[k]
            .iter()
            .map(|&i| self.source_indices[i])
            .collect()
    }
}

/// A pre-trained participant model and its shared-test evaluation.
#[derive(Clone, Debug)]
pub struct Participant {
    pub id: usize,
    pub model: Model,
    pub eval: EvalReport,
    pub history: Option<TrainHistory>,
}

pub fn init_seed(master: u64, participant: usize) -> u64 {
    derive_seed("init", &[master, participant as u64])
}

/// Pre-train one model per participant and evaluate each on the test set.
pub fn pretrain_participants(scenario: &Scenario) -> Result<Vec<Participant>> {
    let plan = &scenario.plan;
    (0..scenario.num_participants())
        .into_par_iter()
        .map(|k| {
            let init = Model::init(&scenario.arch, init_seed(plan.seed, k))?;
            let (model, history) =
                train_supervised(&init, &scenario.participants[k], &scenario.validation, &plan.pretrain)?;
            let eval = evaluate(&model, &scenario.test)?;
            log::debug!("participant {k}: test accuracy {:.4}", eval.overall_accuracy);
            Ok(Participant {
                id: k,
                model,
                eval,
                history: Some(history),
            })
        })
        .collect()
}
