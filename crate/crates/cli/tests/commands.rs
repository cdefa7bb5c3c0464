use std::path::Path;
use std::process::{Command, Output};

const STOCK: &str = include_str!("../../../configs/default.cfg");

fn cellflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Stock config with `key = value` lines replaced.
fn write_config(dir: &Path, keys: &[(&str, &str)]) -> String {
    let text: String = STOCK
        .lines()
        .map(|line| {
            let key = line.split('=').next().unwrap_or("").trim();
            match keys.iter().find(|(k, _)| *k == key) {
                Some((k, v)) => format!("{k} = {v}\n"),
                None => format!("{line}\n"),
            }
        })
        .collect();
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_succeeds_and_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &[("grid.n_m", "41"), ("grid.n_t", "81")]);
    let out = dir.path().join("out");
    let run = cellflow(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
        "--threads",
        "1",
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for name in ["N.csv", "P.csv", "C.csv", "trace_N.csv", "manifest.txt", "config.cfg"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l == "seed = 7"));
    assert!(manifest.lines().any(|l| l == "command = simulate"));
}

#[test]
fn validate_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &[]);
    let out = dir.path().join("out");
    let run = cellflow(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stdout).contains("damaged_below_one"));
    assert!(out.join("validation.txt").exists());
}

#[test]
fn misspelled_key_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, STOCK.replace("rates.v.kind", "rates.veloclty.kind")).unwrap();
    let run = cellflow(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("veloclty"));
}

#[test]
fn missing_config_file_exits_with_one() {
    let run = cellflow(&["validate", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn single_refinement_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &[]);
    let out = dir.path().join("out");
    let run = cellflow(&[
        "convergence",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--refinements",
        "1",
    ]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn strong_division_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &[("rates.beta.params", "8, 2"), ("grid.n_m", "41"), ("grid.n_t", "81")],
    );
    let cfg_text = std::fs::read_to_string(&cfg).unwrap() + "contraction.trials = 10\n";
    std::fs::write(&cfg, cfg_text).unwrap();
    let out = dir.path().join("out");
    let run = cellflow(&["stability", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3), "{}", String::from_utf8_lossy(&run.stdout));
    let report = std::fs::read_to_string(out.join("stability_report.csv")).unwrap();
    assert!(!report.contains("stable-certified"));
}

#[test]
fn zero_threads_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &[]);
    let run = cellflow(&["validate", "--config", &cfg, "--threads", "0"]);
    assert_eq!(run.status.code(), Some(1));
}
