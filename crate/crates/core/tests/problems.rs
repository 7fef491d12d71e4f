mod common;

use std::io::Write;

use common::*;
use lccd::model::{feasibility_residual, Objective};
use lccd::problems::{
    parse_libsvm, parse_libsvm_reader, svm_dual_problem, synthetic_census_like, synthetic_quadratic,
    SvmDataset, SvmDual,
};
use lccd::{build_topology, run_algorithm1, CommGraph, SolverConfig, StopRule, Topology, Weighting};
use proptest::prelude::*;

#[test]
fn synthetic_calibration_and_centers() {
    let p = synthetic_quadratic(12, 4, 3, 1000.0, 5).unwrap();
    assert!((p.objective.value(&p.x0) - 1000.0).abs() <= 1e-9);
    // block 10 (1-based) has center 0
    assert!(p.objective.centers()[9 * 4..10 * 4].iter().all(|&c| c == 0.0));
    assert!(p.objective.centers()[2 * 4..3 * 4].iter().all(|&c| c == 3.0));
    let a = p.constraints.dense();
    assert!(a.iter().all(|&v| (0.0..1.0).contains(&v)));
    assert!(p.objective.block_lipschitz().iter().all(|&l| l == 2.0 * p.objective.scale()));
    assert_eq!(feasibility_residual(&p.constraints, &p.x0).unwrap(), 0.0);
}

#[test]
fn synthetic_rejects_degenerate_input() {
    assert!(synthetic_quadratic(0, 2, 1, 1.0, 0).unwrap_err().is_config());
    assert!(synthetic_quadratic(3, 2, 3, 1.0, 0).unwrap_err().is_config());
    assert!(synthetic_quadratic(3, 2, 1, 0.0, 0).unwrap_err().is_config());
}

#[test]
fn tiny_instance_reaches_kkt_optimum() {
    let p = synthetic_quadratic(6, 2, 2, 100.0, 11).unwrap();
    let (x_star, f_star) = kkt_quadratic(p.objective.scale(), p.objective.centers(), &p.constraints);
    let (x_schur, f_schur) = kkt_quadratic_schur(p.objective.scale(), p.objective.centers(), &p.constraints);
    assert!((f_star - f_schur).abs() <= 1e-9 * f_star);
    for (a, b) in x_star.iter().zip(&x_schur) {
        assert!((a - b).abs() <= 1e-9);
    }
    let g = build_topology(Topology::Clique, 6, Weighting::Uniform).unwrap();
    let cfg = SolverConfig { max_iters: 200_000, stop_rule: StopRule::ResidualNorm(1e-13), ..SolverConfig::default() };
    let (it, _) = run_algorithm1(&p, &g, &cfg).unwrap();
    assert!((it.objective - f_star).abs() <= 1e-6 * f_star, "{} vs {f_star}", it.objective);
}

fn two_point() -> SvmDataset {
    SvmDataset::from_dense(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1.0, -1.0]).unwrap()
}

#[test]
fn svm_at_zero() {
    let p = svm_dual_problem(toy_svm(), 1.0).unwrap();
    assert_eq!(p.objective.value(&p.x0), 0.0);
    assert!(gradient_of(&p.objective, &p.x0).iter().all(|&g| g == -1.0));
    assert_eq!(p.objective.block_lipschitz(), &[1.0, 5.0, 1.0, 5.0]);
}

#[test]
fn two_point_svm_optimum() {
    // α₁ = α₂ = t gives f = 2t² - 2t, minimized at t = 1/2
    let p = svm_dual_problem(two_point(), 1e6).unwrap();
    let g = CommGraph::uniform(2, vec![(0, 1)]).unwrap();
    let (it, _) = run_algorithm1(&p, &g, &SolverConfig { max_iters: 50, ..SolverConfig::default() }).unwrap();
    assert!((it.objective + 0.5).abs() <= 1e-8);
    assert!((it.x[0] - 0.5).abs() <= 1e-8 && (it.x[1] - 0.5).abs() <= 1e-8);
}

#[test]
fn svm_rejects_bad_input() {
    assert!(svm_dual_problem(two_point(), 0.0).unwrap_err().is_config());
    let empty = SvmDataset::new(vec![], vec![], 3).unwrap();
    assert!(svm_dual_problem(empty, 1.0).unwrap_err().is_config());
}

#[test]
fn weights_stay_consistent_over_long_run() {
    let ds = synthetic_census_like(300, 60, 8, 2).unwrap();
    let p = svm_dual_problem(ds, 0.1).unwrap();
    let g = build_topology(Topology::Clique, 300, Weighting::Uniform).unwrap();
    // the engine audits w against a fresh recomputation every 10⁴ updates
    let cfg = SolverConfig { max_iters: 60_000, seed: 8, ..SolverConfig::default() };
    let (it, trace) = run_algorithm1(&p, &g, &cfg).unwrap();
    let c = p.objective.c();
    assert!(it.x.iter().all(|&a| (0.0..=c).contains(&a)));
    let l1: f64 = it.x.iter().sum();
    let s: f64 = it.x.iter().zip(p.objective.dataset().labels()).map(|(a, y)| a * y).sum();
    assert!(s.abs() <= 1e-10 * (1.0 + l1));
    let want = svm_direct_gradient(p.objective.dataset(), &it.x);
    let got = gradient_of(&p.objective, &it.x);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-8);
    }
    assert!(trace.records.iter().all(|r| r.feas_residual <= 1e-10));
}

#[test]
fn census_like_shape() {
    let ds = synthetic_census_like(500, 122, 14, 1).unwrap();
    assert_eq!(ds.len(), 500);
    assert_eq!(ds.feature_dim(), 122);
    assert_eq!(ds.average_nnz(), 14.0);
    let pos = ds.labels().iter().filter(|&&l| l == 1.0).count();
    assert!((100..=150).contains(&pos), "{pos} positives");
    assert!(ds.average_support_overlap(200, 0) < 1.0);
}

#[test]
fn parser_examples() {
    let d = parse_libsvm_reader("+1 3:0.5 7:1\n".as_bytes(), None).unwrap();
    assert_eq!(d.label(0), 1.0);
    assert_eq!(d.example(0).indices, vec![2, 6]);
    assert_eq!(d.example(0).values, vec![0.5, 1.0]);

    let text = "# header\n\n1 1:2\n-1 2:1.5 # trailing\n  \n+1 4:-1\n";
    let d = parse_libsvm_reader(text.as_bytes(), None).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.labels(), &[1.0, -1.0, 1.0]);
    assert_eq!(d.feature_dim(), 4);
    assert_eq!(parse_libsvm_reader(text.as_bytes(), Some(10)).unwrap().feature_dim(), 10);
    assert!(parse_libsvm_reader(text.as_bytes(), Some(3)).unwrap_err().is_config());
}

#[test]
fn parser_errors_carry_line_numbers() {
    let cases = [
        ("1 1:1\n1 1:1 1:2\n", 2),
        ("1 1:1\n\n0 2:1\n", 3),
        ("2 1:1\n", 1),
        ("1 0:1\n", 1),
        ("1 1:1\n-1 3:x\n", 2),
        ("1 1:1\n1 4\n", 2),
        ("-1 3:1 2:1\n", 1),
        ("1 1:nan\n", 1),
    ];
    for (text, want) in cases {
        match parse_libsvm_reader(text.as_bytes(), None) {
            Err(lccd::Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
            other => panic!("{text:?} gave {other:?}"),
        }
    }
}

#[test]
fn parser_reads_plain_and_gzip_files() {
    let text = "+1 1:1 3:0.25\n-1 2:2\n";
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("d.txt");
    std::fs::write(&plain, text).unwrap();
    let gz = dir.path().join("d.txt.gz");
    let mut enc = flate2::write::GzEncoder::new(std::fs::File::create(&gz).unwrap(), flate2::Compression::default());
    enc.write_all(text.as_bytes()).unwrap();
    enc.finish().unwrap();
    let a = parse_libsvm(&plain, None).unwrap();
    let b = parse_libsvm(&gz, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
    assert!(matches!(parse_libsvm(dir.path().join("missing"), None), Err(lccd::Error::Io(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blockwise_sum_matches_value(seed in 0u64..1000, b in 2usize..12, dim in 1usize..5) {
        let p = synthetic_quadratic(b, dim, 1, 50.0, seed).unwrap();
        let mut r = rng(seed);
        let x = normal_vec(&mut r, b * dim);
        let parts: f64 = (0..b).map(|i| p.objective.block_value(i, &x[i * dim..(i + 1) * dim])).sum();
        prop_assert!((parts - p.objective.value(&x)).abs() <= 1e-12 * (1.0 + parts.abs()));
    }

    #[test]
    fn svm_runs_stay_dual_feasible(seed in 0u64..1000, c in 0.01f64..2.0) {
        let ds = synthetic_census_like(40, 20, 4, seed).unwrap();
        let p = svm_dual_problem(ds, c).unwrap();
        let g = build_topology(Topology::StarRing, 40, Weighting::Uniform).unwrap();
        let cfg = SolverConfig { max_iters: 3000, seed, trace_every: 50, ..SolverConfig::default() };
        let (it, trace) = run_algorithm1(&p, &g, &cfg).unwrap();
        for r in &trace.records {
            prop_assert!(r.feas_residual <= 1e-10 * (1.0 + c * 40.0));
        }
        prop_assert!(it.x.iter().all(|&a| (0.0..=c).contains(&a)));
        let dual = SvmDual::new(p.objective.dataset().clone(), c).unwrap();
        let w = dual.weights(&it.x);
        prop_assert!((dual.value(&it.x) - svm_direct_value(dual.dataset(), &it.x)).abs() <= 1e-9 * (1.0 + w.len() as f64));
    }
}
