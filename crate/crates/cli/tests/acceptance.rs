//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kdsim::data::{
    LabeledDataset, PartitionerRegistry, ToySpec, TransferOrigin, TransferSet,
};
use kdsim::distill::{dpkd_masks, DistillConfig, KdObjective, KdRegistry, MaskPair, SoftTarget};
use kdsim::fed::{fedavg_aggregate, local_seed, preconsolidated_fedavg, rounds_to_target, run_federated, FedConfig, InitTag};
use kdsim::metrics::learning_forgetting;
use kdsim::nn::{
    cross_entropy_grad, evaluate, fit, kl_grad, softmax_t, ArchSpec, BatchObjective, Logits, LossGrad, Model,
    ProbDist, Supervised,
};
use kdsim::orchestrator::{
    consolidate_models, pretrain_participants, run_pairwise_matrix, ConsolidationSpec, ExperimentPlan, GridSpec,
    MatrixSpec, PairResult, Participant, Scenario, StartPolicy, TeacherStrength,
};
use kdsim::report::{load_report_json, REPORT_JSON};
use kdsim::rng::seeded;
use ndarray::Array2;
use rand::Rng;

const GRAD_TOL: f64 = 1e-5;
const GRAD_SECONDS: f64 = 10.0;
const TUNED_SECONDS: f64 = 15.0 * 60.0;
const FED_SECONDS: f64 = 30.0 * 60.0;
const RECONCILE_TOL: f64 = 1e-9;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const MIN_SEEDS: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn desk(strategy: &str, seed: u64) -> (Scenario, Vec<Participant>) {
    let (train, test) = ToySpec {
        seed,
        ..ToySpec::default()
    }
    .generate()
    .unwrap();
    let plan = ExperimentPlan {
        name: format!("{strategy}-{seed}"),
        participants: 10,
        strategy: strategy.into(),
        seed,
        ..ExperimentPlan::default()
    };
    let sc = Scenario::prepare(&plan, &train, &test, &PartitionerRegistry::builtin()).unwrap();
    let ps = pretrain_participants(&sc).unwrap();
    (sc, ps)
}

// ---- 1: gradients ----

const H: f64 = 1e-6;

fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    norm(&diff) / (norm(a) + norm(n)).max(1e-12)
}

fn logits(rng: &mut impl Rng, rows: usize, scale: f64) -> Logits {
    Logits(Array2::from_shape_fn((rows, 3), |_| scale * rng.random_range(-2.0..2.0)))
}

fn probs(rng: &mut impl Rng, rows: usize) -> ProbDist {
    softmax_t(&logits(rng, rows, 1.0), 1.0).unwrap()
}

fn fd_error(z: &Logits, f: &dyn Fn(&Logits) -> LossGrad) -> f64 {
    let analytic: Vec<f64> = f(z).dlogits.iter().copied().collect();
    let numeric: Vec<f64> = (0..z.0.len())
        .map(|i| {
            let (r, c) = (i / 3, i % 3);
            let mut p = z.clone();
            p.0[[r, c]] += H;
            let mut m = z.clone();
            m.0[[r, c]] -= H;
            (f(&p).loss - f(&m).loss) / (2.0 * H)
        })
        .collect();
    rel_err(&analytic, &numeric)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(11);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, e: f64| {
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..20 {
        let z = logits(&mut rng, 5, 1.0);
        let y: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        note("ce", fd_error(&z, &|x| cross_entropy_grad(x, &y).unwrap()));
        for &t in &GridSpec::reference().temperatures {
            let q = probs(&mut rng, 5);
            note("kl", fd_error(&z, &|x| kl_grad(x, &q, t).unwrap()));
        }
        let rows: Vec<usize> = (0..5).collect();
        let m: Vec<f64> = (0..5).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect();
        let masked = KdObjective {
            alpha: 1.0,
            temperature: rng.random_range(0.5..5.0),
            labels: None,
            targets: vec![
                SoftTarget {
                    probs: probs(&mut rng, 5),
                    weights: m.clone(),
                },
                SoftTarget {
                    probs: probs(&mut rng, 5),
                    weights: m.iter().map(|v| 1.0 - v).collect(),
                },
            ],
        };
        note("masked", fd_error(&z, &|x| masked.loss_grad(x, &rows).unwrap()));
        let multi = KdObjective {
            alpha: rng.random_range(0.1..0.9),
            temperature: rng.random_range(0.5..5.0),
            labels: Some(&y),
            targets: (0..3)
                .map(|_| SoftTarget {
                    probs: probs(&mut rng, 5),
                    weights: (0..5).map(|_| rng.random_range(0.0..0.5)).collect(),
                })
                .collect(),
        };
        note("multi_teacher", fd_error(&z, &|x| multi.loss_grad(x, &rows).unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.values().cloned().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(max <= GRAD_TOL && secs < GRAD_SECONDS, format!("max rel err {detail}; {secs:.2}s"))
}

// ---- 2: masks ----

fn true_class_prob(z: &Array2<f64>, row: usize, y: usize) -> f64 {
    let m = z.row(row).iter().cloned().fold(f64::MIN, f64::max);
    let denom: f64 = z.row(row).iter().map(|v| (v - m).exp()).sum();
    (z[[row, y]] - m).exp() / denom
}

fn masks() -> Outcome {
    let arch = ArchSpec::new(4, vec![6], 3);
    let mut rng = seeded(22);
    let (mut triples, mut bad, mut tie_triples) = (0, 0, 0);
    for trial in 0..10u64 {
        let teacher = Model::init(&arch, 100 + trial).unwrap();
        let frozen = Model::init(&arch, 200 + trial).unwrap();
        let ts = TransferSet {
            features: Array2::from_shape_fn((100, 4), |_| rng.random_range(-3.0..3.0)),
            labels: Some((0..100).map(|_| rng.random_range(0..3)).collect()),
            class_count: 3,
            origin: TransferOrigin::PublicLabeled,
        };
        let labels = ts.labels.clone().unwrap();
        let mp = dpkd_masks(&teacher, &frozen, &ts, true).unwrap();
        let zt = teacher.forward_logits(ts.features.view()).unwrap().0;
        let zs = frozen.forward_logits(ts.features.view()).unwrap().0;
        for (l, &y) in labels.iter().enumerate() {
            triples += 1;
            let expect_teacher = true_class_prob(&zt, l, y) > true_class_prob(&zs, l, y);
            if mp.teacher[l] == mp.frozen[l] || mp.teacher[l] != expect_teacher {
                bad += 1;
            }
        }
        // identical models tie on every sample
        let same = dpkd_masks(&frozen, &frozen, &ts, true).unwrap();
        tie_triples += same.len();
        bad += same.teacher.iter().filter(|&&t| t).count() + same.frozen.iter().filter(|&&f| !f).count();
    }
    let scalar = MaskPair::from_scores(&[0.5, 0.2, 0.7], &[0.5, 0.3, 0.1]);
    let scalar_ok = scalar.teacher == [false, false, true] && scalar.frozen == [true, true, false];
    outcome(
        bad == 0 && scalar_ok && triples >= 1000,
        format!("{triples} random triples, {tie_triples} tied triples, {bad} violations"),
    )
}

// ---- 3 and 4: tuned vs vanilla, cardinality ----

fn tuned_dominance(sc: &Scenario, ps: &[Participant], all: &mut Vec<PairResult>) -> Outcome {
    let start = Instant::now();
    let spec = MatrixSpec {
        methods: vec!["vanilla".into(), "tuned".into()],
        transfer_options: vec![TransferOrigin::PublicUnlabeledLarge],
        grid: GridSpec::reference(),
        ..MatrixSpec::default()
    };
    let has_default_cell = spec.grid.temperatures.contains(&1.0) && spec.grid.alphas.contains(&0.5);
    let rs = run_pairwise_matrix(sc, ps, &spec, &KdRegistry::builtin()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let vanilla: BTreeMap<(usize, usize), f64> = rs
        .iter()
        .filter(|r| r.method == "vanilla")
        .map(|r| ((r.teacher_id, r.student_id), r.gain_points))
        .collect();
    let tuned: Vec<&PairResult> = rs.iter().filter(|r| r.method == "tuned").collect();
    let wins = tuned
        .iter()
        .filter(|t| t.gain_points >= vanilla[&(t.teacher_id, t.student_id)])
        .count();
    let pass = has_default_cell && wins == tuned.len() && tuned.len() == vanilla.len() && secs < TUNED_SECONDS;
    let detail = format!("tuned >= vanilla on {wins}/{} pairs; {secs:.0}s", tuned.len());
    all.extend(rs);
    outcome(pass, detail)
}

fn cardinality(sc: &Scenario, ps: &[Participant], all: &mut Vec<PairResult>) -> Outcome {
    let spec = MatrixSpec {
        methods: vec!["vanilla".into(), "dml".into(), "dpkd".into()],
        transfer_options: TransferOrigin::ALL.to_vec(),
        distill: DistillConfig {
            epochs: 2,
            ..DistillConfig::vanilla()
        },
        ..MatrixSpec::default()
    };
    let rs = run_pairwise_matrix(sc, ps, &spec, &KdRegistry::builtin()).unwrap();
    let mut counts: BTreeMap<(String, &str), usize> = BTreeMap::new();
    for r in &rs {
        *counts.entry((r.method.clone(), r.transfer_option.name())).or_default() += 1;
    }
    let mut pass = counts.len() == spec.methods.len() * spec.transfer_options.len();
    // the tuned/vanilla run from criterion 3 counts too
    let tuned = all.iter().filter(|r| r.method == "tuned").count();
    pass &= counts.values().all(|&n| n == 90) && tuned == 90;
    let self_pairs = rs.iter().filter(|r| r.teacher_id == r.student_id).count();
    pass &= self_pairs == 0;
    all.extend(rs);
    outcome(
        pass,
        format!("{} (method, option) groups, sizes {:?}, tuned 90 = {}", counts.len(), counts.values().collect::<Vec<_>>(), tuned == 90),
    )
}

// ---- 5: FedAvg ----

fn fedavg_oracle() -> Outcome {
    let arch = ArchSpec::new(6, vec![9, 4], 3);
    let mut mismatches = 0;
    for seed in 0..50u64 {
        let k = 2 + (seed as usize % 8);
        let models: Vec<Model> = (0..k).map(|i| Model::init(&arch, seed * 100 + i as u64).unwrap()).collect();
        let sizes: Vec<usize> = (0..k).map(|i| 1 + (seed as usize * 37 + i * 101) % 250).collect();
        let total = sizes.iter().sum::<usize>() as f64;
        let flats: Vec<Vec<f64>> = models.iter().map(Model::flatten).collect();
        let oracle: Vec<f64> = (0..flats[0].len())
            .map(|i| {
                let mut acc = (sizes[0] as f64 / total) * flats[0][i];
                for j in 1..k {
                    acc += (sizes[j] as f64 / total) * flats[j][i];
                }
                acc
            })
            .collect();
        if fedavg_aggregate(&models, &sizes).unwrap().flatten() != oracle {
            mismatches += 1;
        }
    }
    let (train, test) = ToySpec {
        classes: 4,
        dim: 6,
        train_per_class: 50,
        test_per_class: 20,
        ..ToySpec::default()
    }
    .generate()
    .unwrap();
    let client: LabeledDataset = train;
    let arch = ArchSpec::new(6, vec![8], 4);
    let init = Model::init(&arch, 3).unwrap();
    let cfg = FedConfig {
        rounds: 3,
        seed: 5,
        ..FedConfig::default()
    };
    let traj = run_federated(&init, std::slice::from_ref(&client), &test, &cfg, InitTag::Random).unwrap();
    let mut local = init.clone();
    let objective = Supervised { labels: &client.labels };
    let mut expected = Vec::new();
    for round in 0..cfg.rounds {
        fit(&mut local, &client.features, &objective, &cfg.local, cfg.local_epochs, local_seed(cfg.seed, round, 0)).unwrap();
        expected.push(evaluate(&local, &test).unwrap().overall_accuracy);
    }
    let single_ok = traj.accuracies == expected;
    outcome(
        mismatches == 0 && single_ok,
        format!("{mismatches}/50 aggregation mismatches; single client equals local training: {single_ok}"),
    )
}

// ---- 6, 7, 8: directional ----

fn preconsolidation(desks: &[(Scenario, Vec<Participant>)]) -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    let mut cells = Vec::new();
    for ((sc, ps), &seed) in desks.iter().zip(&SEEDS) {
        let cfg = FedConfig {
            rounds: 30,
            seed,
            ..FedConfig::default()
        };
        let cmp = preconsolidated_fedavg(sc, ps, &ConsolidationSpec::default(), &cfg).unwrap();
        let target = cmp.random.final_accuracy().unwrap();
        let r = rounds_to_target(&cmp.random, target);
        let p = rounds_to_target(&cmp.preconsolidated, target);
        if let (Some(r), Some(p)) = (r, p) {
            if p < r {
                hits += 1;
            }
        }
        cells.push(format!("{p:?}<{r:?}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        hits >= MIN_SEEDS && secs < FED_SECONDS,
        format!("fewer rounds on {hits}/5 seeds [{}]; {secs:.0}s", cells.join(" ")),
    )
}

fn start_policy() -> Outcome {
    let mut hits = 0;
    let mut cells = Vec::new();
    for &seed in &SEEDS {
        let (sc, ps) = desk("quantity_skew", seed);
        let acc = |start| {
            let spec = ConsolidationSpec {
                start,
                ..ConsolidationSpec::default()
            };
            consolidate_models(&sc, &ps, &spec).unwrap().eval.overall_accuracy
        };
        let (best, worst) = (acc(StartPolicy::Best), acc(StartPolicy::Worst));
        if best >= worst {
            hits += 1;
        }
        cells.push(format!("{:.1}/{:.1}", 100.0 * best, 100.0 * worst));
    }
    outcome(hits >= MIN_SEEDS, format!("best >= worst on {hits}/5 seeds [{}]", cells.join(" ")))
}

fn transfer_size(desks: &[(Scenario, Vec<Participant>)], all: &mut Vec<PairResult>) -> Outcome {
    let mut hits = 0;
    let mut cells = Vec::new();
    for (sc, ps) in desks {
        let spec = MatrixSpec {
            methods: vec!["vanilla".into()],
            transfer_options: vec![TransferOrigin::PublicUnlabeledSmall, TransferOrigin::PublicUnlabeledLarge],
            ..MatrixSpec::default()
        };
        let rs = run_pairwise_matrix(sc, ps, &spec, &KdRegistry::builtin()).unwrap();
        let mean = |opt| {
            let g: Vec<f64> = rs
                .iter()
                .filter(|r| r.transfer_option == opt && r.strength == TeacherStrength::Strong)
                .map(|r| r.gain_points)
                .collect();
            g.iter().sum::<f64>() / g.len().max(1) as f64
        };
        let (small, large) = (
            mean(TransferOrigin::PublicUnlabeledSmall),
            mean(TransferOrigin::PublicUnlabeledLarge),
        );
        if large >= small {
            hits += 1;
        }
        cells.push(format!("{large:+.2}/{small:+.2}"));
        all.extend(rs);
    }
    outcome(
        hits >= MIN_SEEDS,
        format!("large >= small mean strong-pair gain on {hits}/5 seeds [{}]", cells.join(" ")),
    )
}

// ---- 9: determinism through the command line ----

const PIPELINE: &str = r#"
seed = 4

[dataset.toy]
classes = 5
dim = 8
train_per_class = 80
test_per_class = 30

[plan]
participants = 3
strategy = "label_skew_dirichlet"
hidden_layers = [16]

[plan.transfer_sizes]
labeled = 30
unlabeled_small = 30
unlabeled_large = 60

[plan.pretrain]
max_epochs = 15

[matrix]
methods = ["vanilla", "tuned", "dml", "dpkd"]
transfer_options = ["public_labeled", "student_data"]

[matrix.distill]
epochs = 3

[matrix.grid]
temperatures = [1.0, 3.0]
alphas = [0.5, 0.9]

[consolidate]
distill = { epochs = 3 }

[fed]
rounds = 4
"#;

const STAGES: [&str; 8] = ["partition", "pretrain", "distill", "grid", "matrix", "consolidate", "fedavg", "report"];

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn kdsim(cfg: &Path, out: &Path, stage: &str) -> i32 {
    kdsim_cli::run([
        "kdsim",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        stage,
    ])
}

fn determinism(all: &mut Vec<PairResult>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, PIPELINE).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut problems = Vec::new();
    for stage in STAGES {
        if kdsim(&cfg, &a, stage) != 0 || kdsim(&cfg, &b, stage) != 0 {
            problems.push(format!("{stage} failed"));
            continue;
        }
        let before = snapshot(&a);
        if kdsim(&cfg, &a, stage) != 0 || snapshot(&a) != before {
            problems.push(format!("{stage} rerun changed files"));
        }
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    if sa != sb {
        problems.push("independent output directories differ".into());
    }
    if let Ok(doc) = load_report_json(&a.join("report").join(REPORT_JSON)) {
        all.extend(doc.results);
    } else {
        problems.push("report json unreadable".into());
    }
    let detail = if problems.is_empty() {
        format!("{} files identical across reruns and directories", sa.len())
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

// ---- 10: metric identities ----

fn reconciliation(all: &[PairResult]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for r in all {
        let lf = learning_forgetting(&r.pre, &r.post).unwrap();
        let net = lf.net_fraction(&r.pre.per_class_support);
        let diff = (net - r.gain_points / 100.0).abs();
        worst = worst.max(diff);
        if diff > RECONCILE_TOL || lf.learning != r.learning || lf.forgetting != r.forgetting {
            bad += 1;
        }
    }
    outcome(
        bad == 0 && !all.is_empty(),
        format!("{} pair results, max |learning - forgetting - gain| {worst:.1e}", all.len()),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {}", o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    let mut all = Vec::new();

    report(1, "gradients", gradients());
    report(2, "mask algebra", masks());
    let desks: Vec<_> = SEEDS.iter().map(|&s| desk("label_skew_dirichlet", s)).collect();
    report(3, "tuned dominates vanilla", tuned_dominance(&desks[0].0, &desks[0].1, &mut all));
    report(4, "cardinality", cardinality(&desks[0].0, &desks[0].1, &mut all));
    report(5, "fedavg oracle", fedavg_oracle());
    report(6, "preconsolidated federation", preconsolidation(&desks));
    report(7, "best start consolidation", start_policy());
    report(8, "transfer set size", transfer_size(&desks, &mut all));
    report(9, "determinism", determinism(&mut all));
    report(10, "learning/forgetting reconciliation", reconciliation(&all));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
