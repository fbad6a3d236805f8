//! End-to-end checks of the command-line interface: exit codes, output
//! determinism and the model-file path.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gccsolver"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn price_note33_matches_formula() {
    let dir = tempdir();
    let out = run(&["price", "--scenario", "note33", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let expect = -((-5.0f64).exp() * 0.3 + 0.7).ln();
    let line = stdout(&out);
    let value: f64 = line
        .lines()
        .next()
        .unwrap()
        .strip_prefix("root value ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - expect).abs() < 1e-12);
    assert!(dir.path().join("o/price.csv").exists());
    let diag = std::fs::read_to_string(dir.path().join("o/pricing_diagnostics.csv")).unwrap();
    assert!(diag.starts_with("node,time"));
}

#[test]
fn price_constant_claim() {
    let dir = tempdir();
    let out = run(&["price", "--scenario", "const", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("root value 3.0000000000000000e0"));
}

#[test]
fn nash_exit_codes_and_determinism() {
    let dir = tempdir();
    let args = ["nash", "--scenario", "example43", "--first-mover", "seller", "--out", "a"];
    assert_eq!(run(&args, dir.path()).status.code(), Some(0));
    let args2 = ["nash", "--scenario", "example43", "--first-mover", "seller", "--out", "b"];
    assert_eq!(run(&args2, dir.path()).status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a/equilibrium.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/equilibrium.json")).unwrap();
    assert_eq!(a, b, "reruns must be byte-identical");
    let a = std::fs::read(dir.path().join("a/trace.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/trace.csv")).unwrap();
    assert_eq!(a, b);

    // iteration cap exceeded
    let out = run(
        &["nash", "--scenario", "example43", "--max-iter", "1", "--out", "c"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_round_trip_and_rejection() {
    let dir = tempdir();
    assert_eq!(
        run(&["nash", "--scenario", "example43", "--out", "eq"], dir.path()).status.code(),
        Some(0)
    );
    let out = run(
        &["verify", "--scenario", "example43", "--rules", "eq/equilibrium.json", "--out", "v"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));

    // a non-equilibrium pair is rejected with exit 4: both stopping at the
    // root hands the buyer the exercise value although waiting for the
    // recall penalty strictly dominates
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"buyer_stops": [0], "seller_stops": [0]}"#,
    )
    .unwrap();
    let out = run(
        &["verify", "--scenario", "example43", "--rules", "bad.json", "--out", "vb"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempdir();
    let out = run(&["price", "--scenario", "unknown"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    let out = run(&["price", "--model", "broken.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["price"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_file_price_and_nash() {
    let dir = tempdir();
    // one-step no-hedge model: claim pays 1 up, 0 down with p = 0.4
    let model = r#"{
        "schema": "gccsolver-model-v1",
        "horizon_years": 1.0,
        "asset_dim": 0,
        "nodes": [
            {"id": 0, "time": 0, "parent": null},
            {"id": 1, "time": 1, "parent": 0, "prob": 0.4},
            {"id": 2, "time": 1, "parent": 0, "prob": 0.6}
        ],
        "processes": [
            {"name": "X", "values": [0.0, 1.0, 0.0]},
            {"name": "Y", "values": [0.5, 1.0, 0.0]}
        ],
        "claims": [{"name": "H", "values": [1.0, 0.0]}]
    }"#;
    std::fs::write(dir.path().join("m.json"), model).unwrap();
    let out = run(
        &["price", "--model", "m.json", "--alpha-b", "2.0", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let expect = -(0.4f64 * (-2.0f64).exp() + 0.6).ln() / 2.0;
    let value: f64 = stdout(&out)
        .lines()
        .next()
        .unwrap()
        .strip_prefix("root value ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((value - expect).abs() < 1e-12);

    let out = run(&["nash", "--model", "m.json", "--out", "n"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn selftest_passes_and_fault_injection_fails() {
    let dir = tempdir();
    let out = run(&["selftest", "--trees", "4", "--samples", "40"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("PASS"));
    let out = run(
        &["selftest", "--trees", "3", "--samples", "20", "--inject-fault"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn describe_prints_parameters() {
    let dir = tempdir();
    let out = run(
        &["nash", "--scenario", "example41-case1", "--describe"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("alpha_A = 2"));
    assert!(text.contains("alpha_B/2 < mu < alpha_A/2"));
}

struct TempDir(std::path::PathBuf);

impl TempDir {
    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn tempdir() -> TempDir {
    let base = std::env::temp_dir().join(format!(
        "gccsolver-cli-test-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::create_dir_all(&base).unwrap();
    TempDir(base)
}
