mod common;

use kdsim::data::TransferOrigin;
use kdsim::distill::{DistillConfig, KdRegistry};
use kdsim::nn::EvalReport;
use kdsim::orchestrator::{
    best_cell, best_teacher_frequency, consolidate_models, run_pair, run_pairwise_matrix, select_start, ConsolidationSpec,
    GridSpec, MatrixSpec, PairKey, PairResult, StartPolicy, TeacherStrength, Weighting,
};

/// Widest spread of pre-trained accuracies allowed under the uniform split.
const UNIFORM_BAND_POINTS: f64 = 15.0;

fn short(epochs: usize) -> DistillConfig {
    DistillConfig {
        epochs,
        ..DistillConfig::vanilla()
    }
}

fn spec(methods: &[&str], options: &[TransferOrigin], epochs: usize) -> MatrixSpec {
    MatrixSpec {
        methods: methods.iter().map(|m| m.to_string()).collect(),
        transfer_options: options.to_vec(),
        distill: short(epochs),
        ..MatrixSpec::default()
    }
}

#[test]
fn uniform_participants_land_in_a_narrow_band() {
    let (_, ps) = common::desk("uniform", 10, 30);
    let accs: Vec<f64> = ps.iter().map(|p| 100.0 * p.eval.overall_accuracy).collect();
    let spread = accs.iter().cloned().fold(f64::MIN, f64::max) - accs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= UNIFORM_BAND_POINTS, "accuracies {accs:?}");
}

#[test]
fn specialized_participants_favor_their_dominant_class() {
    let (_, ps) = common::desk("specialized", 10, 31);
    for (i, p) in ps.iter().enumerate() {
        let acc = &p.eval.per_class_accuracy;
        let others: f64 = acc.iter().enumerate().filter(|&(c, _)| c != i).map(|(_, a)| a).sum::<f64>()
            / (acc.len() - 1) as f64;
        assert!(acc[i] >= others, "participant {i}: {acc:?}");
    }
}

#[test]
fn pretraining_yields_one_model_per_participant() {
    let (sc, ps) = common::pretrained("quantity_skew", 4, 32);
    assert_eq!(ps.len(), 4);
    assert_eq!(sc.num_participants(), 4);
    assert!(ps.iter().enumerate().all(|(i, p)| p.id == i));
}

#[test]
fn matrix_has_k_times_k_minus_one_records_and_no_self_pairs() {
    let (sc, ps) = common::pretrained("uniform", 4, 33);
    let options = [TransferOrigin::PublicUnlabeledSmall, TransferOrigin::StudentData];
    let rs = run_pairwise_matrix(&sc, &ps, &spec(&["vanilla", "dpkd"], &options, 2), &KdRegistry::builtin()).unwrap();
    assert_eq!(rs.len(), 2 * 2 * 12);
    for method in ["vanilla", "dpkd"] {
        for option in options {
            let n = rs.iter().filter(|r| r.method == method && r.transfer_option == option).count();
            assert_eq!(n, 12);
        }
    }
    for r in &rs {
        assert_ne!(r.teacher_id, r.student_id);
        // students restart from their stored pre-trained state
        assert_eq!(r.pre, ps[r.student_id].eval);
        assert_eq!(r.teacher, ps[r.teacher_id].eval);
        let gain = 100.0 * (r.post.overall_accuracy - r.pre.overall_accuracy);
        assert!((r.gain_points - gain).abs() <= 1e-9);
        let expected = TeacherStrength::from_delta(r.strength_delta);
        assert_eq!(r.strength, expected);
    }
}

#[test]
fn two_participants_give_two_records() {
    let (sc, ps) = common::pretrained("uniform", 2, 34);
    let rs = run_pairwise_matrix(&sc, &ps, &spec(&["vanilla"], &[TransferOrigin::PublicLabeled], 1), &KdRegistry::builtin())
        .unwrap();
    assert_eq!(rs.len(), 2);
}

#[test]
fn matrix_is_reproducible() {
    let (sc, ps) = common::pretrained("label_skew_chunks", 3, 35);
    let s = spec(&["vanilla", "dml"], &[TransferOrigin::PublicLabeled], 2);
    let a = run_pairwise_matrix(&sc, &ps, &s, &KdRegistry::builtin()).unwrap();
    let b = run_pairwise_matrix(&sc, &ps, &s, &KdRegistry::builtin()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_method_is_rejected() {
    let (sc, ps) = common::pretrained("uniform", 2, 36);
    let e = run_pairwise_matrix(&sc, &ps, &spec(&["nope"], &[TransferOrigin::PublicLabeled], 1), &KdRegistry::builtin());
    assert!(matches!(e, Err(kdsim::KdError::Config(_))));
}

#[test]
fn tuned_dominates_vanilla_and_surface_rescans_to_the_same_cell() {
    let (sc, ps) = common::pretrained("label_skew_dirichlet", 3, 37);
    let mut s = spec(&["vanilla", "tuned"], &[TransferOrigin::PublicUnlabeledLarge], 5);
    s.grid = GridSpec {
        temperatures: vec![0.5, 1.0, 3.0],
        alphas: vec![0.25, 0.5, 0.9],
    };
    let rs = run_pairwise_matrix(&sc, &ps, &s, &KdRegistry::builtin()).unwrap();
    let (tuned, vanilla): (Vec<&PairResult>, Vec<&PairResult>) = rs.iter().partition(|r| r.method == "tuned");
    assert_eq!(tuned.len(), vanilla.len());
    for (t, v) in tuned.iter().zip(&vanilla) {
        assert_eq!((t.teacher_id, t.student_id), (v.teacher_id, v.student_id));
        assert!(t.gain_points >= v.gain_points, "pair {}->{}", t.teacher_id, t.student_id);
        let grid = t.grid.as_ref().unwrap();
        assert_eq!(grid.surface.len(), 9);
        let again = best_cell(&grid.surface).unwrap();
        assert_eq!((again.temperature, again.alpha, again.gain), (grid.best_temperature, grid.best_alpha, grid.best_gain));
        assert_eq!((t.temperature, t.alpha), (Some(grid.best_temperature), Some(grid.best_alpha)));
        // the (1, 0.5) cell reproduces the vanilla run exactly
        let cell = grid.surface.iter().find(|c| c.temperature == 1.0 && c.alpha == 0.5).unwrap();
        assert_eq!(cell.gain, v.gain_points);
    }
}

fn fake(teacher: usize, student: usize, gain_counts: usize) -> PairResult {
    let pre = EvalReport::from_counts(&[5, 5], &[10, 10]);
    let post = EvalReport::from_counts(&[gain_counts, 5], &[10, 10]);
    let key = PairKey {
        scenario: "s",
        method: "vanilla",
        option: TransferOrigin::PublicLabeled,
        teacher,
        student,
    };
    PairResult::build(key, &pre, post, &pre).unwrap()
}

#[test]
fn best_teacher_matches_brute_force_argmax() {
    // gains[t][s], diagonal unused
    let gains = [[0, 7, 3], [9, 0, 8], [2, 6, 0]];
    let mut rs = Vec::new();
    for t in 0..3 {
        for s in 0..3 {
            if t != s {
                rs.push(fake(t, s, gains[t][s]));
            }
        }
    }
    let table = best_teacher_frequency(&rs).unwrap();
    for s in 0..3 {
        let brute = (0..3).filter(|&t| t != s).max_by_key(|&t| (gains[t][s], std::cmp::Reverse(t))).unwrap();
        assert_eq!(table.best_for_student[&s], brute);
    }
    assert_eq!(table.counts.values().sum::<usize>(), 3);
    assert_eq!(table.counts[&1], 2);
    assert_eq!(table.counts[&0], 1);
}

#[test]
fn equal_gains_go_to_the_lowest_teacher() {
    let rs: Vec<PairResult> = (0..3)
        .flat_map(|t| (0..3).filter(move |&s| s != t).map(move |s| fake(t, s, 5)))
        .collect();
    let table = best_teacher_frequency(&rs).unwrap();
    assert_eq!(table.best_for_student[&0], 1);
    assert_eq!(table.best_for_student[&1], 0);
    assert_eq!(table.best_for_student[&2], 0);
    assert!(best_teacher_frequency(&[]).is_err());
}

#[test]
fn start_policies_pick_extremes() {
    let (sc, ps) = common::pretrained("quantity_skew", 4, 38);
    let accs: Vec<f64> = ps.iter().map(|p| p.eval.overall_accuracy).collect();
    let best = select_start(&ps, StartPolicy::Best).unwrap();
    let worst = select_start(&ps, StartPolicy::Worst).unwrap();
    assert!(accs.iter().all(|&a| a <= accs[best] && a >= accs[worst]));
    assert_eq!(select_start(&ps, StartPolicy::Untrained), None);
    let out = consolidate_models(&sc, &ps, &ConsolidationSpec::default()).unwrap();
    assert_eq!(out.start_id, Some(best));
    assert_eq!(out.teacher_ids.len(), 3);
    assert!(!out.teacher_ids.contains(&best));
}

#[test]
fn consolidating_identical_models_keeps_their_accuracy() {
    let (sc, ps) = common::desk("uniform", 3, 39);
    let clones: Vec<_> = (0..3)
        .map(|i| {
            let mut p = ps[0].clone();
            p.id = i;
            p
        })
        .collect();
    let common_acc = ps[0].eval.overall_accuracy;
    for weighting in [Weighting::Adaptive, Weighting::Equal] {
        let spec = ConsolidationSpec {
            weighting,
            ..ConsolidationSpec::default()
        };
        let out = consolidate_models(&sc, &clones, &spec).unwrap();
        let diff = 100.0 * (out.eval.overall_accuracy - common_acc);
        assert!(diff.abs() <= 1.0, "{weighting:?}: {diff} points");
    }
}

#[test]
fn untrained_start_uses_every_participant_as_teacher() {
    let (sc, ps) = common::pretrained("uniform", 3, 40);
    let spec = ConsolidationSpec {
        start: StartPolicy::Untrained,
        transfer_option: TransferOrigin::PublicUnlabeledLarge,
        distill: short(5),
        ..ConsolidationSpec::default()
    };
    let out = consolidate_models(&sc, &ps, &spec).unwrap();
    assert_eq!(out.teacher_ids, vec![0, 1, 2]);
    let bad = ConsolidationSpec {
        start: StartPolicy::Untrained,
        ..ConsolidationSpec::default()
    };
    assert!(consolidate_models(&sc, &ps, &bad).is_err());
    assert!(consolidate_models(&sc, &ps[..1], &ConsolidationSpec::default()).is_err());
}

#[test]
fn single_pair_matches_its_matrix_record() {
    let (sc, ps) = common::pretrained("uniform", 3, 41);
    let s = spec(&["vanilla", "dpkd"], &[TransferOrigin::PublicUnlabeledSmall, TransferOrigin::StudentData], 2);
    let registry = KdRegistry::builtin();
    let rs = run_pairwise_matrix(&sc, &ps, &s, &registry).unwrap();
    for r in &rs {
        let method = registry.get(&r.method).unwrap();
        let (one, model) =
            run_pair(&sc, &ps, &s, method.as_ref(), r.transfer_option, r.teacher_id, r.student_id).unwrap();
        assert_eq!(&one, r);
        assert_eq!(kdsim::nn::evaluate(&model, &sc.test).unwrap(), r.post);
    }
    let vanilla = registry.get("vanilla").unwrap();
    assert!(run_pair(&sc, &ps, &s, vanilla.as_ref(), TransferOrigin::PublicLabeled, 1, 1).is_err());
}
