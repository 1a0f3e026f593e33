//! End-to-end tests of the `salab` binary: exit codes, output files,
//! JSON shapes and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_salab")
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sa-lab-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, m: usize, n: u64) -> PathBuf {
    let cfg = format!(
        r#"{{
        "model": {{"kind": "paper_section3", "a": 0.7}},
        "grid": [{{"alpha0": 0.5, "rho": 0.6}}],
        "m_runs": {m},
        "n_steps": {n},
        "burn_in": 100,
        "base_seed": 77,
        "init": {{"kind": "gaussian", "cov_scale": 25.0}},
        "checkpoints": [200, 500, 1000, {n}]
    }}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "salab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn theory_prints_expected_predictions() {
    let dir = tmpdir("theory");
    let cfg = write_config(&dir, 4, 2_000);
    let stdout = run_ok(&["theory", "--config", cfg.to_str().unwrap()]);
    let stats: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let row = &stats.as_array().unwrap()[0];
    assert_eq!(row["rho"], 0.6);
    let upsilon = row["upsilon_bar_star"].as_array().unwrap();
    assert!((upsilon[0].as_f64().unwrap() + 8.0).abs() < 1e-9);
    assert!((upsilon[1].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-9);
    let sigma = row["sigma_pr_scalar"].as_f64().unwrap();
    assert!((sigma - (140.0f64 / 3.0).sqrt()).abs() < 1e-9);
}

#[test]
fn simulate_writes_all_tables() {
    let dir = tmpdir("simulate");
    let cfg = write_config(&dir, 6, 2_000);
    let out = dir.join("results");
    run_ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    for name in ["summary.csv", "curves.csv", "finals.csv"] {
        let p = out.join(name);
        assert!(p.exists(), "{name} missing");
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().count() > 1, "{name} has no data rows");
    }
    // finals.csv: one row per run plus the header.
    let finals = std::fs::read_to_string(out.join("finals.csv")).unwrap();
    assert_eq!(finals.lines().count(), 7);
}

#[test]
fn reproduce_rejects_unknown_figure() {
    let dir = tmpdir("badfig");
    let cfg = write_config(&dir, 4, 1_000);
    let out = run(&[
        "reproduce",
        "--figure",
        "fig3",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig3"));
}

#[test]
fn missing_config_is_an_error() {
    let out = run(&["simulate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn decomp_reports_tiny_residuals() {
    let dir = tmpdir("decomp");
    let cfg = write_config(&dir, 4, 2_000);
    let stdout = run_ok(&[
        "decomp",
        "--n-steps",
        "5000",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(stats["n_terms"], 4_999);
    assert!(stats["max_relative_residual"].as_f64().unwrap() < 1e-9);
    assert!(stats["max_upsilon_gap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn rates_emits_slope_report() {
    let dir = tmpdir("rates");
    let cfg = write_config(&dir, 12, 2_000);
    let stdout = run_ok(&["rates", "--config", cfg.to_str().unwrap()]);
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let row = &report["rows"].as_array().unwrap()[0];
    assert!(row["raw"]["slope"].as_f64().unwrap().is_finite());
}

#[test]
fn seed_override_changes_results() {
    let dir = tmpdir("seed");
    let cfg = write_config(&dir, 5, 1_000);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    run_ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "123456",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    let a = std::fs::read(out_a.join("summary.csv")).unwrap();
    let b = std::fs::read(out_b.join("summary.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn emit_plots_writes_svgs() {
    let dir = tmpdir("plots");
    let cfg = write_config(&dir, 5, 1_000);
    let out = dir.join("figs");
    run_ok(&[
        "reproduce",
        "--figure",
        "fig2",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--emit-plots",
    ]);
    assert!(out.join("curves.csv").exists());
    assert!(out.join("fig2_raw.svg").exists());
    assert!(out.join("fig2_pr.svg").exists());
}
