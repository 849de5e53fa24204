//! Runner behaviour on small configs with known outcomes.

use sdechaos_lab::{builtin_config, run, Command, ExperimentConfig, Status};

const BASE: &str = r#"
experiment = "small"
seed = 11
t = 0.25
x0 = [0.0, 0.0]

[field]
id = "constant-identity"
d = 2

[f]
kind = "gaussian"
center = [0.25, 0.0]
variance = 0.5
amplitude = 1.0

[grid]
r_dom = 4.0
n = 33
"#;

fn config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!("{BASE}{extra}")).and_then(|c| c.finalize(None)).unwrap()
}

#[test]
fn constant_field_preserves_separations_exactly() {
    let c = config("[paths]\nlevel = 6\nn_paths = 200\n[flow]\nbootstrap = 20\ntime_exponents = [1, 2, 3]\n");
    let r = run(Command::Flow, &c).unwrap();
    let v = r.find("space-exponent").unwrap();
    assert_eq!(v.status, Status::Pass);
    assert!(v.detail.contains("exactly"), "{}", v.detail);
    let drift = r.metrics.iter().find(|m| m.name == "space-max-relative-drift").unwrap();
    assert!(drift.value <= 1e-12);
    let fd = r.find("variational-fd").unwrap();
    assert_eq!(fd.status, Status::Pass, "{}", fd.detail);
}

#[test]
fn constant_ladder_distances_sit_at_rounding() {
    // Mollifying additive noise leaves the coefficients unchanged.
    let c = config("[paths]\nlevel = 6\nn_paths = 100\n[uniqueness]\nladder = [2, 4]\n");
    let r = run(Command::Uniqueness, &c).unwrap();
    let v = r.find("ladder-trend").unwrap();
    assert_eq!(v.status, Status::Pass, "{}", v.detail);
    assert!(v.detail.contains("rounding level"), "{}", v.detail);
    assert_eq!(r.find("duplicate-agreement").unwrap().status, Status::Pass);
}

#[test]
fn few_paths_leave_feynman_kac_inconclusive() {
    let mut c = config("[paths]\nlevel = 4\nn_paths = 50\n[chaos]\ntable_nodes = 8\n");
    c.checks = vec!["fk-agreement".into()];
    let r = run(Command::Identity, &c).unwrap();
    assert_eq!(r.find("fk-agreement@x0").unwrap().status, Status::Inconclusive);
    assert_eq!(r.find("boundary-guard").unwrap().status, Status::Pass);
}

#[test]
fn same_seed_same_report() {
    let c = config("[paths]\nlevel = 5\nn_paths = 200\n[chaos]\ntable_nodes = 16\n");
    let a = run(Command::Identity, &c).unwrap().to_json();
    let b = run(Command::Identity, &c).unwrap().to_json();
    assert_eq!(a, b);
    let other = c.clone().finalize(Some(12)).unwrap();
    assert_ne!(a, run(Command::Identity, &other).unwrap().to_json());
}

#[test]
fn tripped_guard_makes_other_verdicts_inconclusive() {
    let c = ExperimentConfig::from_toml(builtin_config("ac7").unwrap()).and_then(|c| c.finalize(None)).unwrap();
    let r = run(Command::Identity, &c).unwrap();
    assert_eq!(r.find("boundary-guard").unwrap().status, Status::Fail);
    assert_eq!(r.overall(), Some(Status::Fail));
    let others: Vec<_> = r.verdicts.iter().filter(|v| v.check != "boundary-guard").collect();
    assert!(others.iter().all(|v| v.status == Status::Inconclusive));
    assert!(others.iter().any(|v| v.detail.ends_with("boundary guard tripped")));
}

#[test]
fn builtin_configs_are_valid_and_cite_criteria() {
    for (i, name) in ["ac1", "ac2", "ac3", "ac4", "ac5", "ac6", "ac7"].iter().enumerate() {
        let c = ExperimentConfig::from_toml(builtin_config(name).unwrap()).and_then(|c| c.finalize(None));
        assert!(c.is_ok(), "{name}: {:?}", c.err());
        assert!(c.unwrap().experiment.starts_with(&format!("ac{}", i + 1)));
    }
    assert!(builtin_config("ac8").is_none());
}

#[test]
fn every_verdict_cites_an_acceptance_criterion() {
    let c = config("[paths]\nlevel = 5\nn_paths = 200\n[chaos]\ntable_nodes = 16\n");
    let r = run(Command::Identity, &c).unwrap();
    assert!(!r.verdicts.is_empty());
    for v in &r.verdicts {
        let n: u32 = v.criterion.strip_prefix("AC").and_then(|s| s.parse().ok()).expect("AC id");
        assert!((1..=7).contains(&n));
    }
}

#[test]
fn oracle_command_reports_metrics_only() {
    let r = run(Command::Oracle, &config("")).unwrap();
    assert!(r.verdicts.is_empty());
    assert!(!r.metrics.is_empty());
}
