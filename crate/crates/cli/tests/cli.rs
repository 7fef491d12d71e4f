use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lccd::problems::stochastic_toy;

fn lccd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lccd"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("LCCD_SEED")
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn topology_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = lccd(&["topology", "--preset", "synth-small", "--topologies", "ring,clique", "--iters", "10000", "--seeds", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for t in ["ring", "clique"] {
        for s in 0..3 {
            let (h, rows) = csv_rows(&dir.path().join(format!("topology_{t}_seed{s}.csv")));
            assert_eq!(h, ["k", "wall_s", "objective", "feas_residual"]);
            assert_eq!(rows.len(), 101);
        }
    }
    let (h, rows) = csv_rows(&dir.path().join("summary.csv"));
    assert_eq!(h, ["topology", "seed", "iters_to_target", "final_obj"]);
    // a run that never reaches the target counts as slower than any that does
    let iters = |t: &str| -> Vec<f64> {
        rows.iter().filter(|r| r[0] == t).map(|r| r[2].parse().unwrap_or(f64::INFINITY)).collect()
    };
    assert!(median(iters("clique")) < median(iters("ring")));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--no-wall-clock", "topology", "--topologies", "star-ring", "--iters", "3000", "--seeds", "2"];
    assert!(lccd(&args, a.path()).status.success());
    assert!(lccd(&args, b.path()).status.success());
    for f in ["topology_star-ring_seed0.csv", "topology_star-ring_seed1.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let args = ["--no-wall-clock", "stochastic", "--iters", "5000"];
    assert!(lccd(&args, a.path()).status.success());
    assert!(lccd(&args, b.path()).status.success());
    assert_eq!(fs::read(a.path().join("stochastic.csv")).unwrap(), fs::read(b.path().join("stochastic.csv")).unwrap());
}

#[test]
fn seed_from_environment_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lccd"))
        .args(["--out", dir.path().to_str().unwrap(), "topology", "--topologies", "clique", "--iters", "200"])
        .env("LCCD_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("topology_clique_seed5.csv").exists());
    let o = Command::new(env!("CARGO_BIN_EXE_lccd"))
        .args(["--out", dir.path().to_str().unwrap(), "--seed", "9", "topology", "--topologies", "clique", "--iters", "200"])
        .env("LCCD_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("topology_clique_seed9.csv").exists());
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 2\nout = \"results\"\n[topology]\ntopologies = [\"tree-ring\"]\niters = 500\nseeds = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lccd"))
        .args(["--config", cfg.to_str().unwrap(), "topology", "--iters", "300"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = csv_rows(&dir.path().join("results/topology_tree-ring_seed2.csv"));
    assert_eq!(rows.last().unwrap()[0], "300");

    fs::write(&cfg, "[topology]\niterations = 5\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lccd")).args(["--config", cfg.to_str().unwrap(), "topology"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["topology", "--topologies", "mesh"],
        vec!["async", "--lock-modes", "none"],
        vec!["svm"],
        vec!["svm", "--preset", "svm-toy", "--svm-c", "0"],
        vec!["stochastic", "--preset", "big"],
        vec!["topology", "--theta", "1.5"],
    ] {
        let o = lccd(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_lccd")).arg("nonsense").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.txt");
    fs::write(&data, "+1 1:1 2:1\n-1 3:1\n+1 2:1 1:1\n").unwrap();
    let out = dir.path().join("out");
    let o = lccd(&["svm", "--data", data.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.txt:3"), "{err}");
    assert!(!out.exists() || fs::read_dir(&out).unwrap().count() == 0);
}

#[test]
fn svm_toy_recovers_separator() {
    let dir = tempfile::tempdir().unwrap();
    let o = lccd(&["svm", "--preset", "svm-toy", "--svm-c", "10", "--theta", "0.99999999"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = fs::read_to_string(dir.path().join("svm_model.txt")).unwrap();
    let mut lines = model.lines();
    assert_eq!(lines.next(), Some("2"));
    let mut w = [0.0f64; 2];
    for l in lines {
        let (i, v) = l.split_once(' ').unwrap();
        w[i.parse::<usize>().unwrap() - 1] = v.parse().unwrap();
    }
    // maximum-margin separator (1, 0)
    assert!((w[0] - 1.0).abs() <= 1e-4 && w[1].abs() <= 1e-4, "{w:?}");
    let (_, rows) = csv_rows(&dir.path().join("svm.csv"));
    assert!((column(&rows, 2).last().unwrap() + 0.5).abs() <= 1e-4);
}

#[test]
fn svm_threads_agree_with_sequential() {
    let seq = tempfile::tempdir().unwrap();
    let par = tempfile::tempdir().unwrap();
    let common = ["svm", "--preset", "census-like", "--subsample", "500", "--svm-c", "0.05", "--ref-iters", "2000000"];
    let o = lccd(&common, seq.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut args = common.to_vec();
    args.extend(["--threads", "8", "--lock-mode", "double"]);
    let o = lccd(&args, par.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let last = |d: &Path| *column(&csv_rows(&d.join("svm.csv")).1, 2).last().unwrap();
    let (a, b) = (last(seq.path()), last(par.path()));
    assert!((a - b).abs() <= 1e-4 * a.abs(), "{a} vs {b}");
}

#[test]
fn async_grid_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = lccd(
        &["async", "--preset", "synth-small", "--threads", "1,8", "--lock-modes", "free,double", "--delay-us", "50"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&dir.path().join("async.csv"));
    assert_eq!(h, ["threads", "lock_mode", "wall_s", "final_obj", "tau_hat", "speedup"]);
    assert_eq!(rows.len(), 4);
    for r in rows.iter().filter(|r| r[0] == "1") {
        assert_eq!(r[4], "0");
        assert_eq!(r[5], "1");
    }
    let speedup = |mode: &str| -> f64 { rows.iter().find(|r| r[0] == "8" && r[1] == mode).unwrap()[5].parse().unwrap() };
    assert!(speedup("free") > speedup("double"));
}

#[test]
fn stochastic_best_is_monotone_and_decays() {
    let p = stochastic_toy(4, 2, 4, 100).unwrap();
    let (_, f_star) = p.objective.constrained_minimum(&p.constraints).unwrap();
    let (mut early, mut late) = (0.0, 0.0);
    for seed in 0..10 {
        let dir = tempfile::tempdir().unwrap();
        let o = lccd(&["--seed", &seed.to_string(), "stochastic", "--iters", "16000"], dir.path());
        assert!(o.status.success());
        let (h, rows) = csv_rows(&dir.path().join("stochastic.csv"));
        assert_eq!(h, ["k", "wall_s", "objective", "feas_residual", "best_objective"]);
        let best = column(&rows, 4);
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        let at = |k: &str| rows.iter().position(|r| r[0] == k).map(|i| best[i] - f_star).unwrap();
        early += at("1000");
        late += at("16000");
    }
    assert!(late <= 0.75 * early, "{late} vs {early}");
}
