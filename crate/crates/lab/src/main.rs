use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sdechaos_lab::{exit_code, run_timed, Command, ExperimentConfig, Format, LabError, RUNTIME_ERROR};

/// Seeded experiments on SDEs with singular coefficients.
#[derive(Debug, Parser)]
#[command(name = "sdechaos", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; reports go to stdout as JSON when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list of `json` and `csv`.
    #[arg(long, default_value = "json,csv")]
    format: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(RUNTIME_ERROR as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, LabError> {
    let formats = Format::parse_list(&cli.format)?;
    let config = ExperimentConfig::load(&cli.config)?.finalize(cli.seed)?;
    let (report, timing) = run_timed(cli.command, &config)?;
    match &cli.out {
        Some(dir) => {
            report.emit(dir, &formats)?;
            timing.write(dir)?;
        }
        None => print!("{}", report.to_json()),
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    for v in &report.verdicts {
        eprintln!("{} {} {}: {}", v.criterion, v.check, v.status.label(), v.detail);
    }
    eprintln!("{:.1} s (budget {:.0} s)", timing.seconds, timing.budget_seconds);
    Ok(exit_code(&report))
}
