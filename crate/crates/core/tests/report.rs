mod common;

use std::fs;

use kdsim::data::TransferOrigin;
use kdsim::distill::{DistillConfig, KdRegistry};
use kdsim::fed::{run_federated, FedConfig, FedTrajectory, InitTag};
use kdsim::metrics::{cumulative_gain, learning_forgetting};
use kdsim::nn::Model;
use kdsim::orchestrator::{run_pairwise_matrix, MatrixSpec, PairResult};
use kdsim::report::{
    cumulative_csv, emit_report, load_report_json, load_results_csv, parse_report_json, parse_results_csv,
    parse_trajectories_csv, report_json, results_csv, trajectories_csv, ReportFormat, ResultRow, CUMULATIVE_CSV,
    REPORT_JSON, RESULTS_CSV, SCATTER_CSV, TRAJECTORIES_CSV,
};

fn fixture() -> (Vec<PairResult>, Vec<FedTrajectory>) {
    let (sc, ps) = common::pretrained("label_skew_dirichlet", 3, 60);
    let spec = MatrixSpec {
        methods: vec!["vanilla".into(), "dml".into()],
        transfer_options: vec![TransferOrigin::PublicLabeled, TransferOrigin::StudentData],
        distill: DistillConfig {
            epochs: 2,
            ..DistillConfig::vanilla()
        },
        ..MatrixSpec::default()
    };
    let results = run_pairwise_matrix(&sc, &ps, &spec, &KdRegistry::builtin()).unwrap();
    let cfg = FedConfig {
        rounds: 3,
        ..FedConfig::default()
    };
    let init = Model::init(&sc.arch, 1).unwrap();
    let traj = run_federated(&init, &sc.participants, &sc.test, &cfg, InitTag::Random).unwrap();
    (results, vec![traj])
}

#[test]
fn csv_round_trip_recovers_every_row() {
    let (results, _) = fixture();
    let rows = parse_results_csv(&results_csv(&results)).unwrap();
    let expected: Vec<ResultRow> = results.iter().map(ResultRow::from).collect();
    assert_eq!(rows, expected);
}

#[test]
fn json_round_trip_is_lossless() {
    let (results, trajs) = fixture();
    let doc = parse_report_json(&report_json(&results, &trajs)).unwrap();
    assert_eq!(doc.results, results);
    assert_eq!(doc.trajectories.len(), 1);
    assert_eq!(doc.trajectories[0].accuracies, trajs[0].accuracies);
    assert_eq!(doc.trajectories[0].setup_digest, trajs[0].setup_digest);
}

#[test]
fn trajectory_csv_starts_at_round_zero() {
    let (_, trajs) = fixture();
    let rows = parse_trajectories_csv(&trajectories_csv(&trajs)).unwrap();
    assert_eq!(rows.len(), trajs[0].rounds() + 1);
    assert_eq!(rows[0].round, 0);
    assert!((rows[0].accuracy - 100.0 * trajs[0].initial_accuracy).abs() <= 0.005);
    assert!(rows.iter().all(|r| r.init_tag == InitTag::Random));
}

#[test]
fn emitted_files_are_byte_identical_across_runs() {
    let (results, trajs) = fixture();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let formats = [ReportFormat::Csv, ReportFormat::Json];
    let written = emit_report(&results, &trajs, &formats, a.path()).unwrap();
    emit_report(&results, &trajs, &formats, b.path()).unwrap();
    assert_eq!(written.len(), 5);
    for name in [RESULTS_CSV, SCATTER_CSV, CUMULATIVE_CSV, TRAJECTORIES_CSV, REPORT_JSON] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(load_results_csv(&a.path().join(RESULTS_CSV)).unwrap().len(), results.len());
    assert_eq!(load_report_json(&a.path().join(REPORT_JSON)).unwrap().results, results);
    // input order must not matter
    let mut shuffled = results.clone();
    shuffled.reverse();
    assert_eq!(results_csv(&shuffled), results_csv(&results));
}

#[test]
fn empty_inputs_emit_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&[], &[], &[ReportFormat::Csv, ReportFormat::Json], dir.path()).unwrap();
    for name in [RESULTS_CSV, SCATTER_CSV, CUMULATIVE_CSV, TRAJECTORIES_CSV] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
    assert!(load_report_json(&dir.path().join(REPORT_JSON)).unwrap().results.is_empty());
}

#[test]
fn emitted_pairs_reconcile_learning_and_forgetting() {
    let (results, trajs) = fixture();
    let doc = parse_report_json(&report_json(&results, &trajs)).unwrap();
    for r in &doc.results {
        let lf = learning_forgetting(&r.pre, &r.post).unwrap();
        assert_eq!(lf.learning, r.learning);
        assert_eq!(lf.forgetting, r.forgetting);
        let net = lf.net_fraction(&r.pre.per_class_support);
        assert!((net - r.gain_points / 100.0).abs() <= 1e-9);
    }
}

#[test]
fn cumulative_file_sums_per_method() {
    let (results, _) = fixture();
    let labeled: Vec<PairResult> = results
        .iter()
        .filter(|r| r.transfer_option == TransferOrigin::PublicLabeled)
        .cloned()
        .collect();
    let totals = cumulative_gain(&labeled);
    for method in ["vanilla", "dml"] {
        let by_hand: f64 = labeled.iter().filter(|r| r.method == method).map(|r| r.gain_points).sum();
        assert!((totals[method] - by_hand).abs() <= 1e-9);
    }
    let text = cumulative_csv(&results);
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn bad_inputs_are_parse_errors() {
    assert!(parse_results_csv("a,b\n1,2\n").is_err());
    assert!(parse_report_json("{\"schema_version\":99,\"results\":[],\"trajectories\":[]}").is_err());
    assert!(parse_report_json("not json").is_err());
}
