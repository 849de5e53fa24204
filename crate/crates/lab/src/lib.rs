//! Seeded experiment runners over `sdechaos`.
//!
//! Each subcommand maps a config to a [`Report`](report::Report) whose
//! verdicts cite the acceptance criterion they instantiate. Reports are a
//! pure function of the config, seed included.

pub mod config;
pub mod report;
mod runners;
mod setup;

use std::time::Instant;

use clap::ValueEnum;
use thiserror::Error;

pub use config::ExperimentConfig;
pub use report::{Format, Report, Status, Timing, Verdict};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sdechaos::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Feynman–Kac agreement, energy identity, martingale representation.
    Identity,
    /// Remainder sequence, monotonicity, trend, oracle equivalence.
    Criterion,
    /// Pathwise chaos reconstruction against Euler endpoints.
    Reconstruct,
    /// Common-noise mollification ladders and duplicate solves.
    Uniqueness,
    /// Moment scalings of the flow and the variational check.
    Flow,
    /// Closed-form reference values only.
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Identity => "identity",
            Command::Criterion => "criterion",
            Command::Reconstruct => "reconstruct",
            Command::Uniqueness => "uniqueness",
            Command::Flow => "flow",
            Command::Oracle => "oracle",
        }
    }
}

/// Runs one experiment; the config must be finalized.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<Report, LabError> {
    match command {
        Command::Identity => runners::identity::run(config),
        Command::Criterion => runners::criterion::run(config),
        Command::Reconstruct => runners::reconstruct::run(config),
        Command::Uniqueness => runners::uniqueness::run(config),
        Command::Flow => runners::flow::run(config),
        Command::Oracle => runners::oracle::run(config),
    }
}

/// [`run`] with a wall-clock record.
pub fn run_timed(command: Command, config: &ExperimentConfig) -> Result<(Report, Timing), LabError> {
    let start = Instant::now();
    let report = run(command, config)?;
    let seconds = start.elapsed().as_secs_f64();
    let timing = Timing {
        experiment: config.experiment.clone(),
        seconds,
        budget_seconds: config.budget_seconds,
        within_budget: seconds <= config.budget_seconds,
    };
    Ok((report, timing))
}

/// Process exit code of a finished run: 0 pass, 1 fail, 2 inconclusive.
pub fn exit_code(report: &Report) -> i32 {
    match report.overall() {
        None | Some(Status::Pass) => 0,
        Some(Status::Fail) => 1,
        Some(Status::Inconclusive) => 2,
    }
}

/// Exit code of a run that could not finish.
pub const RUNTIME_ERROR: i32 = 3;

/// Built-in acceptance configs, by name `ac1`..`ac7`.
pub fn builtin_config(name: &str) -> Option<&'static str> {
    Some(match name {
        "ac1" => include_str!("../configs/ac1.toml"),
        "ac2" => include_str!("../configs/ac2.toml"),
        "ac3" => include_str!("../configs/ac3.toml"),
        "ac4" => include_str!("../configs/ac4.toml"),
        "ac5" => include_str!("../configs/ac5.toml"),
        "ac6" => include_str!("../configs/ac6.toml"),
        "ac7" => include_str!("../configs/ac7.toml"),
        _ => return None,
    })
}
