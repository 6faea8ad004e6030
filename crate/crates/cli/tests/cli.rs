//! End-to-end CLI checks: exit codes, flag handling, report determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codedsketch"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_report(path: &Path) -> serde_json::Value {
    let body = std::fs::read_to_string(path).expect("report exists");
    serde_json::from_str(&body).expect("valid json")
}

#[test]
fn golden_mode_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("golden.json");
    let output = run(&[
        "--mode",
        "example-golden",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let report = json_report(&out);
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert_eq!(report["thresholds"]["operational"], 75);
}

#[test]
fn bad_divisibility_is_a_config_error() {
    let output = run(&["--mode", "approx", "--random", "7x8x8", "--trials", "1"]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    // fails fast: no report written to stdout
    assert!(output.stdout.is_empty());
}

#[test]
fn unknown_mode_is_a_config_error() {
    let output = run(&["--mode", "telepathy"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_one() {
    // b' = 1 and d = 1 cannot recover a dense product exactly
    let output = run(&[
        "--mode",
        "sparse-exact",
        "--p",
        "2",
        "--m",
        "4",
        "--n",
        "4",
        "--bprime",
        "1",
        "--d",
        "1",
        "--random",
        "16x16x16",
        "--block-sparse",
        "4",
        "--trials",
        "5",
        "--seed",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn sparse_mode_passes_with_wide_sketches_and_odd_d() {
    let output = run(&[
        "--mode",
        "sparse-exact",
        "--p",
        "2",
        "--m",
        "4",
        "--n",
        "4",
        "--bprime",
        "24",
        "--d",
        "3",
        "--random",
        "16x16x16",
        "--block-sparse",
        "1",
        "--trials",
        "10",
        "--seed",
        "5",
    ]);
    assert!(output.status.success(), "{output:?}");
}

#[test]
fn reports_are_deterministic_modulo_run_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    for out in [&out1, &out2] {
        let output = run(&[
            "--mode",
            "approx",
            "--p",
            "2",
            "--m",
            "2",
            "--n",
            "2",
            "--bprime",
            "4",
            "--d",
            "3",
            "--random",
            "8x8x8",
            "--trials",
            "3",
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{output:?}");
    }
    let mut r1 = json_report(&out1);
    let mut r2 = json_report(&out2);
    // the echoed output path is the one configured difference
    for r in [&mut r1, &mut r2] {
        r["run_meta"] = serde_json::Value::Null;
        r["config"]["out"] = serde_json::Value::Null;
    }
    assert_eq!(
        serde_json::to_vec(&r1).unwrap(),
        serde_json::to_vec(&r2).unwrap()
    );
}

#[test]
fn env_seed_fallback_matches_explicit_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_env = dir.path().join("env.json");
    let out_flag = dir.path().join("flag.json");
    let common = [
        "--mode", "approx", "--random", "8x8x8", "--bprime", "4", "--d", "3", "--trials", "2",
    ];
    let output = bin()
        .args(common)
        .args(["--out", out_env.to_str().unwrap()])
        .env("CODEDSKETCH_SEED", "77")
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let output = bin()
        .args(common)
        .args(["--seed", "77", "--out", out_flag.to_str().unwrap()])
        .env_remove("CODEDSKETCH_SEED")
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let mut a = json_report(&out_env);
    let mut b = json_report(&out_flag);
    for r in [&mut a, &mut b] {
        r["run_meta"] = serde_json::Value::Null;
        r["config"]["out"] = serde_json::Value::Null;
    }
    assert_eq!(a, b);
}

#[test]
fn sweep_emits_csv_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let output = run(&[
        "--mode",
        "sweep",
        "--p",
        "1",
        "--m",
        "2",
        "--n",
        "2",
        "--bprime",
        "2,4,8",
        "--d",
        "3",
        "--random",
        "8x8x8",
        "--trials",
        "3",
        "--seed",
        "9",
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let body = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 4); // header + one row per b'
    assert!(lines[0].starts_with("p,m,n,bprime"));
    assert!(lines[1].starts_with("1,2,2,2,"));
    assert!(lines[3].starts_with("1,2,2,8,"));
}

#[test]
fn bprime_list_rejected_outside_sweep() {
    let output = run(&["--mode", "approx", "--bprime", "2,4", "--d", "3"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn csv_matrices_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let mut rows = String::new();
    for i in 0..4 {
        rows.push_str(&format!("{},{},{},{}\n", i, i + 1, i + 2, i + 3));
    }
    std::fs::write(&a, &rows).unwrap();
    std::fs::write(&b, &rows).unwrap();
    let output = run(&[
        "--mode",
        "approx",
        "--p",
        "2",
        "--m",
        "2",
        "--n",
        "2",
        "--bprime",
        "8",
        "--d",
        "3",
        "--matrix-a",
        a.to_str().unwrap(),
        "--matrix-b",
        b.to_str().unwrap(),
        "--trials",
        "1",
    ]);
    assert!(output.status.success(), "{output:?}");
}
