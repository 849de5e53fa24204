//! The `sdechaos` binary: exit codes, emitted files and stdout mode.

use std::path::Path;
use std::process::Command;

use sdechaos_lab::report::{METRICS_HEADER, PATHS_HEADER, SERIES_HEADER, VERDICTS_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_sdechaos");

fn builtin(name: &str) -> String {
    format!("{}/configs/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, text: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
experiment = "small"
seed = 5
t = 0.25
x0 = [0.0, 0.0]
checks = ["fk-agreement"]
[field]
id = "constant-identity"
d = 2
[f]
kind = "gaussian"
center = [0.0, 0.0]
variance = 0.5
amplitude = 1.0
[grid]
n = 33
[paths]
level = 4
n_paths = 50
[chaos]
table_nodes = 8
"#;

fn code(args: &[&str]) -> i32 {
    Command::new(BIN).args(args).output().unwrap().status.code().unwrap()
}

#[test]
fn guard_failure_exits_one_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&["identity", "--config", &builtin("ac7"), "--out", out.to_str().unwrap()]), 1);
    let first_line = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(first_line("metrics.csv"), METRICS_HEADER);
    assert_eq!(first_line("series.csv"), SERIES_HEADER);
    assert_eq!(first_line("paths.csv"), PATHS_HEADER);
    assert_eq!(first_line("verdicts.csv"), VERDICTS_HEADER);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.get("seconds").is_none());
    let timing: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("timing.json")).unwrap()).unwrap();
    assert!(timing["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn emitted_reports_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        code(&["identity", "--config", &builtin("ac7"), "--out", out.to_str().unwrap()]);
    }
    for f in ["report.json", "metrics.csv", "series.csv", "paths.csv", "verdicts.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn inconclusive_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["identity", "--config", &write(dir.path(), SMALL)]), 2);
}

#[test]
fn oracle_without_verdicts_exits_zero_and_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN).args(["oracle", "--config", &write(dir.path(), SMALL)]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["command"], "oracle");
}

#[test]
fn config_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write(dir.path(), &SMALL.replace("seed = 5\n", ""));
    assert_eq!(code(&["identity", "--config", &no_seed]), 3);
    let unknown = write(dir.path(), &format!("{SMALL}\n[extra]\nkey = 1\n"));
    assert_eq!(code(&["identity", "--config", &unknown]), 3);
    assert_eq!(code(&["identity", "--config", "/nonexistent.toml"]), 3);
    let good = write(dir.path(), SMALL);
    assert_eq!(code(&["identity", "--config", &good, "--format", "xml"]), 3);
}

#[test]
fn seed_flag_supplies_a_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), &SMALL.replace("seed = 5\n", ""));
    assert_eq!(code(&["identity", "--config", &cfg, "--seed", "9"]), 2);
}
