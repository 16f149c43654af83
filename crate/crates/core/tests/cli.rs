use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convex-transport"))
}

fn put(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = bin().args(args).output().unwrap();
    let code = out.status.code().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code, v, out)
}

struct Files {
    _dir: tempfile::TempDir,
    delta: String,
    two: String,
    bern: String,
    quad: String,
    zero: String,
    slope: String,
    root: PathBuf,
}

fn files() -> Files {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_path_buf();
    let s = |p: PathBuf| p.display().to_string();
    Files {
        delta: s(put(&d, "delta.json", r#"{"dimension": 1, "points": [[0]]}"#)),
        two: s(put(&d, "two.json", r#"{"dimension": 1, "points": [[-1], [1]], "weights": [0.5, 0.5]}"#)),
        bern: s(put(&d, "bern.json", r#"{"schema": 1, "dimension": 1, "points": [[0], [1]]}"#)),
        quad: s(put(&d, "quad.json", r#"{"kind": "power", "params": {"c": 1, "r": 2}, "dimension": 1}"#)),
        zero: s(put(&d, "zero.json", r#"{"pieces": [{"slope": [0], "intercept": 0}]}"#)),
        slope: s(put(&d, "slope.json", r#"{"pieces": [{"slope": [1], "intercept": 0}]}"#)),
        root: d,
        _dir: dir,
    }
}

#[test]
fn weak_ot_direction() {
    let f = files();
    let (code, v, _) = run(&["ot", "weak", "--from", &f.delta, "--to", &f.two, "--cost", &f.quad]);
    assert_eq!(code, 0);
    assert!(v["result"]["cost"].as_f64().unwrap().abs() < 1e-9);
    let (_, v, _) = run(&["ot", "weak", "--from", &f.two, "--to", &f.delta, "--cost", &f.quad]);
    assert!((v["result"]["cost"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["result"]["plan"]["barycenters"].as_array().unwrap().len(), 2);
    assert_eq!(v["inputs"]["from"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn dual_check_on_zero_function() {
    let f = files();
    let (code, v, _) = run(&["verify", "dual-t-", "--mu", &f.bern, "--lambda", "2", "--c", "0.5", "--function", &f.zero]);
    assert_eq!(code, 0);
    let check = &v["result"]["checks"][0];
    assert_eq!(check["worst_ratio"].as_f64(), Some(1.0));
    assert_eq!(check["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn pipeline_constant() {
    let (code, v, _) = run(&["constants", "pipeline", "--lambda", "2", "--c", "0.5"]);
    assert_eq!(code, 0);
    let c = v["result"]["derived"]["C_mls_convex"].as_f64().unwrap();
    assert!((c - 0.867379).abs() < 1e-6);
    assert_eq!(v["schema"], Value::from(1));
}

#[test]
fn violation_exits_one() {
    // a cost far stronger than the measure allows: Q_1 f is nearly f and Jensen breaks the bound
    let f = files();
    let strong = put(&f.root, "strong.json", r#"{"kind": "power", "params": {"c": 100, "r": 2}, "dimension": 1}"#);
    let (code, v, _) =
        run(&["verify", "dual-t-", "--mu", &f.bern, "--cost", strong.to_str().unwrap(), "--function", &f.slope]);
    assert_eq!(code, 1);
    assert_eq!(v["passed"], Value::Bool(false));
    assert_eq!(v["result"]["checks"][0]["violations"][0]["instance"], Value::from(0));
}

#[test]
fn input_errors_exit_two() {
    let f = files();
    let typo = put(&f.root, "typo.json", r#"{"dimension": 1, "points": [[0]], "wieghts": [1]}"#);
    let (code, _, out) = run(&["entropy", "--nu", typo.to_str().unwrap(), "--mu", &f.bern]);
    assert_eq!(code, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("wieghts"));
    let (code, _, _) = run(&["entropy", "--nu", "/nonexistent.json", "--mu", &f.bern]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["--tolerance", "bogus=1", "constants", "tensorize", "--lambda", "1"]);
    assert_eq!(code, 2);
}

#[test]
fn resource_guard_exits_three() {
    let f = files();
    let (code, _, _) = run(&[
        "hopflax", "semigroup", "--function", &f.slope, "--cost", &f.quad, "--s", "0.1", "--t", "0.1", "--h", "1e-7",
    ]);
    assert_eq!(code, 3);
}

#[test]
fn outputs_and_plot_data() {
    let f = files();
    let report = f.root.join("report.csv");
    let plot = f.root.join("plot.csv");
    let (code, _, out) = run(&[
        "bounds",
        "upper-tail",
        "--lambda",
        "2",
        "--t",
        "0.5",
        "--mu",
        &f.bern,
        "--function",
        &f.slope,
        "--format",
        "csv",
        "--output",
        report.to_str().unwrap(),
        "--plot-data",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.stdout.is_empty());
    let csv = std::fs::read_to_string(report).unwrap();
    assert!(csv.starts_with("key,value\n") && csv.contains("result.exact,0.5"));
    let curve = std::fs::read_to_string(plot).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "t,bound,exact");
    assert_eq!(rows.len(), 102);
    for row in &rows[1..] {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[2] <= cols[1]);
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let f = files();
    let args = ["verify", "transport", "--mu", &f.bern, "--lambda", "2", "--c", "0.02", "--M", "0.5", "--random", "40"];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).arg("--jobs").arg("3").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = bin().args(args).arg("--seed").arg("5").output().unwrap();
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn remaining_subcommands_run() {
    let f = files();
    let cases: Vec<Vec<&str>> = vec![
        vec!["entropy", "--nu", &f.bern, "--mu", &f.two],
        vec!["ot", "standard", "--from", &f.bern, "--to", &f.two, "--cost", &f.quad],
        vec!["w2", "--from", &f.bern, "--to", &f.two],
        vec!["norm", "orlicz", "--cost", &f.quad, "--p", "2", "--x", "-3"],
        vec!["norm", "dual", "--cost", &f.quad, "--p", "2", "--x", "-3"],
        vec!["cost", "eval", "--cost", &f.quad, "--x", "2"],
        vec!["cost", "legendre", "--cost", &f.quad, "--y", "2"],
        vec!["hopflax", "eval", "--function", &f.slope, "--cost", &f.quad, "--t", "1", "--x", "0.5"],
        vec!["hopflax", "residual", "--function", &f.slope, "--C", "1", "--L", "2", "--times", "0.5,1", "--h", "0.02"],
        vec!["poincare", "estimate", "--mu", &f.bern, "--restarts", "4"],
        vec!["verify", "ic2", "--mu", &f.bern, "--lambda", "2", "--c", "0.02", "--M", "0.5", "--random", "5"],
        vec!["verify", "mls-convex", "--mu", &f.bern, "--lambda", "2", "--c", "0.5", "--random", "5"],
        vec!["verify", "mls-concave", "--mu", &f.bern, "--lambda", "2", "--c", "0.02", "--random", "5"],
        vec!["verify", "concentration", "--mu", &f.bern, "--lambda", "2", "--c", "0.02", "--random", "5"],
        vec!["constants", "tensorize", "--lambda", "1"],
        vec!["constants", "mixture", "--lambda0", "2", "--lambda1", "2", "--mu0", &f.bern, "--mu1", &f.two],
        vec!["constants", "perturb", "--lambda", "2", "--osc", "0.5"],
        vec!["bounds", "selfnorm-moment", "--p", "1"],
    ];
    for args in cases {
        let (code, v, out) = run(&args);
        assert_eq!(code, 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(v["passed"], Value::Bool(true), "{args:?}");
    }
    let (_, v, _) = run(&["cost", "legendre", "--cost", &f.quad, "--y", "2"]);
    assert!((v["result"]["legendre"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let (_, v, _) = run(&["bounds", "selfnorm-moment", "--p", "1"]);
    assert_eq!(v["result"]["bound"]["value"].as_f64(), Some(3.0));
}
