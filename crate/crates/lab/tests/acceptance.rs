//! Runs the built-in configs `ac1`..`ac7` and prints one line per criterion.
//!
//! A criterion passes when every verdict of its report passes and the run
//! finishes within the config's budget. `AC7` instead re-runs its fixture,
//! compares the rendered files byte for byte and expects the boundary
//! guard to trip with every other verdict inconclusive.
//!
//! Set `SDECHAOS_ACCEPTANCE=ac2,ac5` to run a subset.

use std::process::ExitCode;

use sdechaos_lab::report::Format;
use sdechaos_lab::{builtin_config, run_timed, Command, ExperimentConfig, Report, Status, Timing};

/// Checks that fail for reasons recorded with the project notes; the line
/// still reads FAIL, but the target only exits non-zero on other failures.
const KNOWN: &[(&str, &str, &str)] = &[(
    "ac6",
    "space-exponent",
    "the 12th spatial moment of the mollified vortex flow is dominated by rare passages through the core",
)];

struct Outcome {
    pass: bool,
    /// Non-passing checks outside `KNOWN`.
    unexpected: Vec<String>,
    summary: String,
}

fn load(name: &str) -> ExperimentConfig {
    let text = builtin_config(name).expect("built-in config");
    ExperimentConfig::from_toml(text).and_then(|c| c.finalize(None)).expect("valid built-in config")
}

fn judge(name: &str, report: &Report, timing: &Timing) -> Outcome {
    let mut unexpected = Vec::new();
    let mut known = Vec::new();
    for v in report.verdicts.iter().filter(|v| v.status != Status::Pass) {
        let label = format!("{} {} {}", v.criterion, v.check, v.status.label());
        match KNOWN.iter().find(|k| k.0 == name && k.1 == v.check) {
            Some(k) => known.push(format!("{label} ({})", k.2)),
            None => unexpected.push(label),
        }
    }
    if !timing.within_budget {
        unexpected.push(format!("runtime {:.0} s over budget {:.0} s", timing.seconds, timing.budget_seconds));
    }
    for n in &report.notes {
        if !n.starts_with("boundary-leak warning") {
            unexpected.push(format!("note: {n}"));
        }
    }
    let passed = report.verdicts.iter().filter(|v| v.status == Status::Pass).count();
    let mut summary = format!("{passed}/{} verdicts pass", report.verdicts.len());
    for k in &known {
        summary.push_str(&format!("; {k}"));
    }
    for u in &unexpected {
        summary.push_str(&format!("; {u}"));
    }
    Outcome { pass: known.is_empty() && unexpected.is_empty(), unexpected, summary }
}

fn standard(name: &str, command: Command) -> (Outcome, Timing) {
    let config = load(name);
    match run_timed(command, &config) {
        Ok((report, timing)) => (judge(name, &report, &timing), timing),
        Err(e) => {
            let timing = Timing { experiment: name.into(), seconds: 0.0, budget_seconds: config.budget_seconds, within_budget: true };
            (Outcome { pass: false, unexpected: vec![e.to_string()], summary: format!("runtime error: {e}") }, timing)
        }
    }
}

fn rendered(report: &Report) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().expect("temp dir");
    let names = report.emit(dir.path(), &[Format::Json, Format::Csv]).expect("emit");
    names.into_iter().map(|n| (n.clone(), std::fs::read(dir.path().join(&n)).expect("read back"))).collect()
}

fn determinism_and_guard() -> (Outcome, Timing) {
    let config = load("ac7");
    let first = run_timed(Command::Identity, &config);
    let second = run_timed(Command::Identity, &config);
    let (Ok((a, ta)), Ok((b, tb))) = (first, second) else {
        let timing = Timing { experiment: "ac7".into(), seconds: 0.0, budget_seconds: config.budget_seconds, within_budget: true };
        return (Outcome { pass: false, unexpected: vec!["runtime error".into()], summary: "runtime error".into() }, timing);
    };
    let mut problems = Vec::new();
    if rendered(&a) != rendered(&b) {
        problems.push("re-run files differ".to_string());
    }
    match a.find("boundary-guard") {
        Some(g) if g.status == Status::Fail => {}
        _ => problems.push("boundary guard did not trip".into()),
    }
    let others: Vec<_> = a.verdicts.iter().filter(|v| v.check != "boundary-guard").collect();
    if others.is_empty() || others.iter().any(|v| v.status != Status::Inconclusive) {
        problems.push("checks on the coarse grid were not all inconclusive".into());
    }
    let seconds = ta.seconds + tb.seconds;
    let timing = Timing {
        experiment: "ac7".into(),
        seconds,
        budget_seconds: config.budget_seconds,
        within_budget: seconds <= config.budget_seconds,
    };
    if !timing.within_budget {
        problems.push("over budget".into());
    }
    let summary = if problems.is_empty() {
        format!("{} files byte-identical on re-run; guard tripped, {} checks inconclusive", rendered(&a).len(), others.len())
    } else {
        problems.join("; ")
    };
    (Outcome { pass: problems.is_empty(), unexpected: problems, summary }, timing)
}

fn main() -> ExitCode {
    let filter: Option<Vec<String>> = std::env::var("SDECHAOS_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').map(|p| p.trim().to_lowercase()).collect());
    let suites: [(&str, Option<Command>); 7] = [
        ("ac1", Some(Command::Criterion)),
        ("ac2", Some(Command::Identity)),
        ("ac3", Some(Command::Reconstruct)),
        ("ac4", Some(Command::Criterion)),
        ("ac5", Some(Command::Uniqueness)),
        ("ac6", Some(Command::Flow)),
        ("ac7", None),
    ];
    let mut unexpected = false;
    for (name, command) in suites {
        if filter.as_ref().is_some_and(|f| !f.iter().any(|n| n == name)) {
            continue;
        }
        let (outcome, timing) = match command {
            Some(c) => standard(name, c),
            None => determinism_and_guard(),
        };
        unexpected |= !outcome.unexpected.is_empty();
        println!(
            "{} {} ({:.1} s of {:.0} s): {}",
            name.to_uppercase(),
            if outcome.pass { "PASS" } else { "FAIL" },
            timing.seconds,
            timing.budget_seconds,
            outcome.summary
        );
    }
    if unexpected {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
