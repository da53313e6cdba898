use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrfmp::forward::{synthesize, CoefficientModel};
use lrfmp::io::{read_dataset, read_expansion, write_coefficients};
use lrfmp::solver::{Approximation, Term};
use lrfmp::trial::DictionaryElement;
use tempfile::TempDir;

fn lrfmp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrfmp"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lrfmp(dir, args);
    assert!(
        out.status.success(),
        "lrfmp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A small model, an orbit and a noisy dataset in a fresh directory.
fn workspace(noise: &str) -> TempDir {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["make-model", "--min-degree", "3", "--max-degree", "8", "--seed", "5", "--out", "model.txt"]);
    ok(d, &["make-orbit", "--count", "600", "--revolutions", "8", "--out", "orbit.csv"]);
    ok(d, &[
        "synth", "--model", "model.txt", "--orbit", "orbit.csv", "--reference-radius", "1", "--noise", noise, "--seed",
        "11", "--out", "data.csv",
    ]);
    tmp
}

const FAST: &[&str] = &[
    "--sh-degree", "10", "--seed-grid-gamma", "4", "--global-evals", "150", "--local-evals", "40",
];

#[test]
fn noiseless_synthesis_matches_model() {
    let tmp = workspace("0");
    let model = lrfmp::io::read_coefficients(&tmp.path().join("model.txt"), "simple".parse().unwrap()).unwrap();
    let ds = read_dataset(&tmp.path().join("data.csv")).unwrap();
    assert_eq!(ds.len(), 600);
    for s in &ds.samples {
        assert_eq!(s.y, synthesize(&model, s.sigma, s.eta).unwrap());
    }
}

#[test]
fn seeded_synthesis_is_reproducible() {
    let a = workspace("0.05");
    let b = workspace("0.05");
    let read = |t: &TempDir| fs::read(t.path().join("data.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    ok(a.path(), &[
        "synth", "--model", "model.txt", "--orbit", "orbit.csv", "--reference-radius", "1", "--seed", "12", "--out",
        "other.csv",
    ]);
    assert_ne!(read(&a), fs::read(a.path().join("other.csv")).unwrap());
}

#[test]
fn rows_below_the_surface_are_reported() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_coefficients(&CoefficientModel::from_entries([(3, 1, 1.0)]).unwrap(), &d.join("m.txt")).unwrap();
    fs::write(d.join("o.csv"), "sigma,lon,t\n1.08,0.5,0.2\n0.9,0.1,0.1\n1.0,0.0,0.0\n1.1,2.0,-0.3\n").unwrap();
    ok(d, &["synth", "--model", "m.txt", "--orbit", "o.csv", "--noise", "0", "--out", "d.csv"]);
    assert_eq!(read_dataset(&d.join("d.csv")).unwrap().len(), 2);
    let m = manifest(d.join("d.csv.manifest.json"));
    assert_eq!(m["details"]["rejected_rows"], 2);
    assert_eq!(m["details"]["samples"], 2);

    fs::write(d.join("bad.csv"), "sigma,lon,t\n0.9,0.1,0.1\n").unwrap();
    assert!(!lrfmp(d, &["synth", "--model", "m.txt", "--orbit", "bad.csv", "--out", "x.csv"]).status.success());
}

#[test]
fn trivial_threshold_gives_empty_expansion() {
    let tmp = workspace("0.05");
    let d = tmp.path();
    let mut args = vec!["solve", "--data", "data.csv", "--rde", "1.0", "--out", "sol.json"];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let (a, history) = read_expansion(&d.join("sol.json")).unwrap();
    assert!(a.terms.is_empty() && history.is_empty());
    let m = manifest(d.join("sol.manifest.json"));
    assert_eq!(m["status"], "converged");
    assert_eq!(m["details"]["iterations"], 0);
}

#[test]
fn solve_writes_history_and_decreasing_rde() {
    let tmp = workspace("0.05");
    let d = tmp.path();
    let mut args = vec!["solve", "--data", "data.csv", "--iterations", "12", "--out", "sol.json"];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let (a, history) = read_expansion(&d.join("sol.json")).unwrap();
    assert_eq!(a.terms.len(), history.len());
    assert!(!history.is_empty() && history.len() <= 12);
    assert!(history.windows(2).all(|w| w[1].rde <= w[0].rde + 1e-15));
    let csv = fs::read_to_string(d.join("sol.history.csv")).unwrap();
    assert!(csv.starts_with("iteration,type,n,j,x,y,z,alpha,objective,rde,tikhonov"));
    assert_eq!(csv.lines().count(), history.len() + 1);
}

fn eval_rrmse(d: &Path, expansion: &str) -> f64 {
    let stdout = ok(d, &[
        "eval", "--expansion", expansion, "--reference-model", "model.txt", "--grid-lat", "19", "--grid-lon", "37",
        "--out-prefix", "ev",
    ]);
    let line = stdout.lines().find(|l| l.starts_with("RRMSE")).expect("RRMSE line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn eval_of_empty_and_exact_expansions() {
    let tmp = workspace("0");
    let d = tmp.path();
    lrfmp::io::write_expansion(&Approximation::default(), &[], &d.join("empty.json")).unwrap();
    assert_eq!(eval_rrmse(d, "empty.json"), 1.0);

    let model = lrfmp::io::read_coefficients(&d.join("model.txt"), "simple".parse().unwrap()).unwrap();
    let exact = Approximation {
        f0: CoefficientModel::default(),
        terms: model
            .coeffs
            .iter()
            .map(|(&(n, j), &alpha)| Term { alpha, element: DictionaryElement::Sh { n, j } })
            .collect(),
    };
    lrfmp::io::write_expansion(&exact, &[], &d.join("exact.json")).unwrap();
    assert!(eval_rrmse(d, "exact.json") < 1e-12);
    for suffix in ["approx", "reference", "abs_error"] {
        let rows = lrfmp::io::read_grid_csv(&d.join(format!("ev.{suffix}.csv"))).unwrap();
        assert_eq!(rows.len(), 19 * 37);
    }
}

#[test]
fn sweep_writes_one_row_per_lambda() {
    let tmp = workspace("0.05");
    let d = tmp.path();
    let mut args = vec![
        "sweep", "--data", "data.csv", "--lambdas", "1e-8,1e-4,1e-1", "--reference-model", "model.txt", "--grid-lat",
        "19", "--grid-lon", "37", "--iterations", "5", "--out-dir", "sw",
    ];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let table = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "lambda,iterations,rde,rrmse,status");
    assert_eq!(lines.len(), 4);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        let rrmse: f64 = cols[3].parse().unwrap();
        assert!(rrmse.is_finite() && rrmse > 0.0);
        assert!(d.join(format!("sw/lambda_{i}.json")).exists());
    }
}

#[test]
fn rerun_reproduces_artifacts() {
    let tmp = workspace("0.05");
    let d = tmp.path();
    let mut args = vec!["solve", "--data", "data.csv", "--iterations", "6", "--out", "sol.json"];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let before = fs::read(d.join("sol.json")).unwrap();
    let stdout = ok(d, &["rerun", "--manifest", "sol.manifest.json"]);
    assert!(stdout.contains("bit-identically"));
    assert_eq!(before, fs::read(d.join("sol.json")).unwrap());
    ok(d, &["--threads", "1", "rerun", "--manifest", "data.csv.manifest.json"]);

    // A changed input is refused.
    fs::write(d.join("data.csv"), fs::read_to_string(d.join("data.csv")).unwrap().replace("e-", "e-1")).unwrap();
    assert!(!lrfmp(d, &["rerun", "--manifest", "sol.manifest.json"]).status.success());
}

#[test]
fn invalid_arguments_fail() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert!(!lrfmp(d, &["solve", "--data", "missing.csv", "--out", "x.json"]).status.success());
    assert!(!lrfmp(d, &["make-model", "--min-degree", "9", "--max-degree", "3", "--out", "m.txt"]).status.success());
    let tmp = workspace("0.05");
    let neg = lrfmp(tmp.path(), &["solve", "--data", "data.csv", "--lambda=-1", "--out", "x.json"]);
    assert!(!neg.status.success());
}

#[test]
fn no_learning_uses_only_seed_centers() {
    let tmp = workspace("0.05");
    let d = tmp.path();
    let mut args = vec!["solve", "--data", "data.csv", "--iterations", "15", "--no-learning", "--out", "sol.json"];
    args.extend_from_slice(FAST);
    ok(d, &args);
    let (a, _) = read_expansion(&d.join("sol.json")).unwrap();
    let seeds = lrfmp::sphere::reuter(4).unwrap();
    for t in &a.terms {
        if let Some((_, x)) = t.element.kernel() {
            let x = x.cartesian();
            assert!((x.norm() - 0.94).abs() < 1e-12);
            let dir = (1.0 / x.norm()) * x;
            assert!(seeds.points.iter().any(|p| (p.unit() - dir).norm() < 1e-12), "center {x:?} is not a seed");
        }
    }
}
