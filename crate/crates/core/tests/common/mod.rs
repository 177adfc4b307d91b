#![allow(dead_code)]

use kdsim::data::{LabeledDataset, PartitionParams, PartitionerRegistry, ToySpec, TransferSizes};
use kdsim::nn::TrainConfig;
use kdsim::orchestrator::{pretrain_participants, ExperimentPlan, Participant, Scenario};

pub fn toy(seed: u64) -> (LabeledDataset, LabeledDataset) {
    ToySpec {
        classes: 5,
        dim: 8,
        train_per_class: 120,
        test_per_class: 40,
        seed,
        ..ToySpec::default()
    }
    .generate()
    .unwrap()
}

pub fn plan(strategy: &str, k: usize, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        name: format!("{strategy}-{seed}"),
        participants: k,
        strategy: strategy.into(),
        params: PartitionParams::default(),
        transfer_sizes: TransferSizes {
            labeled: 40,
            unlabeled_small: 40,
            unlabeled_large: 100,
        },
        hidden_layers: vec![16],
        pretrain: TrainConfig {
            max_epochs: 40,
            ..TrainConfig::pretraining()
        },
        seed,
        ..ExperimentPlan::default()
    }
}

pub fn scenario(strategy: &str, k: usize, seed: u64) -> Scenario {
    let (train, test) = toy(seed);
    Scenario::prepare(&plan(strategy, k, seed), &train, &test, &PartitionerRegistry::builtin()).unwrap()
}

pub fn pretrained(strategy: &str, k: usize, seed: u64) -> (Scenario, Vec<Participant>) {
    let sc = scenario(strategy, k, seed);
    let ps = pretrain_participants(&sc).unwrap();
    (sc, ps)
}

/// The default toy task with the default plan (10 classes, desk transfer sizes).
pub fn desk(strategy: &str, k: usize, seed: u64) -> (Scenario, Vec<Participant>) {
    let (train, test) = ToySpec {
        seed,
        ..ToySpec::default()
    }
    .generate()
    .unwrap();
    let plan = ExperimentPlan {
        name: format!("{strategy}-{seed}"),
        participants: k,
        strategy: strategy.into(),
        seed,
        ..ExperimentPlan::default()
    };
    let sc = Scenario::prepare(&plan, &train, &test, &PartitionerRegistry::builtin()).unwrap();
    let ps = pretrain_participants(&sc).unwrap();
    (sc, ps)
}
