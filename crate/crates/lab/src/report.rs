//! Reports: verdicts, metric tables and their JSON/CSV renderings.
//!
//! Reports hold no timing data, so a re-run with the same config renders
//! byte-identical files. Wall-clock figures go to a separate `timing.json`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::LabError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Inconclusive => "inconclusive",
            Status::Fail => "fail",
        }
    }

    /// `value ± err` against an upper bound.
    pub fn at_most(value: f64, err: f64, bound: f64) -> Self {
        if !value.is_finite() || !err.is_finite() {
            Status::Inconclusive
        } else if value + err <= bound {
            Status::Pass
        } else if value - err > bound {
            Status::Fail
        } else {
            Status::Inconclusive
        }
    }

    /// `value ± err` against a lower bound.
    pub fn at_least(value: f64, err: f64, bound: f64) -> Self {
        Self::at_most(-value, err, -bound)
    }

    /// Deterministic comparison, no error bar.
    pub fn holds(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// One checked claim, tied to an acceptance criterion id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub check: String,
    pub status: Status,
    pub value: f64,
    pub error: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub error: Option<f64>,
}

/// One point of a plot-ready series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub error: Option<f64>,
}

/// One row per Monte Carlo path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub path_id: u64,
    pub t: f64,
    pub value: f64,
    /// `exited`, `clamped`, both joined by `|`, or empty.
    pub flags: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub command: String,
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    pub series: Vec<SeriesPoint>,
    pub verdicts: Vec<Verdict>,
    /// Sub-runs that failed; the suite continued without them.
    pub notes: Vec<String>,
    #[serde(skip)]
    pub paths: Vec<PathRow>,
}

pub const METRICS_HEADER: &str = "metric,value,error";
pub const SERIES_HEADER: &str = "series,x,y,error";
pub const PATHS_HEADER: &str = "path_id,t,value,flags";
pub const VERDICTS_HEADER: &str = "criterion,check,status,value,error,threshold";

/// Output formats selected with `--format`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse_list(s: &str) -> Result<Vec<Format>, LabError> {
        s.split(',')
            .map(|p| match p.trim() {
                "json" => Ok(Format::Json),
                "csv" => Ok(Format::Csv),
                other => Err(LabError::Config(format!("unknown format `{other}`"))),
            })
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|e| format!("{e:e}")).unwrap_or_default()
}

impl Report {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment.clone(),
            command: command.to_string(),
            provenance: Provenance { version: env!("CARGO_PKG_VERSION").to_string(), seed: config.seed() },
            config: config.clone(),
            metrics: Vec::new(),
            series: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            paths: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64, error: Option<f64>) {
        self.metrics.push(Metric { name: name.into(), value, error });
    }

    pub fn point(&mut self, series: impl Into<String>, x: f64, y: f64, error: Option<f64>) {
        self.series.push(SeriesPoint { series: series.into(), x, y, error });
    }

    pub fn verdict(&mut self, criterion: &str, check: impl Into<String>, status: Status, value: f64, error: f64, threshold: f64, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            check: check.into(),
            status,
            value,
            error,
            threshold,
            detail: detail.into(),
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Worst status over all verdicts; `None` when there are none.
    pub fn overall(&self) -> Option<Status> {
        self.verdicts.iter().map(|v| v.status).max()
    }

    pub fn verdicts_for<'a>(&'a self, criterion: &'a str) -> impl Iterator<Item = &'a Verdict> + 'a {
        self.verdicts.iter().filter(move |v| v.criterion == criterion)
    }

    pub fn find(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for m in &self.metrics {
            let _ = writeln!(s, "{},{:e},{}", m.name, m.value, opt(m.error));
        }
        s
    }

    pub fn series_csv(&self) -> String {
        let mut s = format!("{SERIES_HEADER}\n");
        for p in &self.series {
            let _ = writeln!(s, "{},{:e},{:e},{}", p.series, p.x, p.y, opt(p.error));
        }
        s
    }

    pub fn paths_csv(&self) -> String {
        let mut s = format!("{PATHS_HEADER}\n");
        for p in &self.paths {
            let _ = writeln!(s, "{},{:e},{:e},{}", p.path_id, p.t, p.value, p.flags);
        }
        s
    }

    pub fn verdicts_csv(&self) -> String {
        let mut s = format!("{VERDICTS_HEADER}\n");
        for v in &self.verdicts {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e}",
                v.criterion,
                v.check,
                v.status.label(),
                v.value,
                v.error,
                v.threshold
            );
        }
        s
    }

    /// Writes the selected formats into `dir`; returns the file names.
    pub fn emit(&self, dir: &Path, formats: &[Format]) -> Result<Vec<String>, LabError> {
        std::fs::create_dir_all(dir)?;
        let mut files: Vec<(&str, String)> = Vec::new();
        if formats.contains(&Format::Json) {
            files.push(("report.json", self.to_json()));
        }
        if formats.contains(&Format::Csv) {
            files.push(("metrics.csv", self.metrics_csv()));
            files.push(("series.csv", self.series_csv()));
            files.push(("verdicts.csv", self.verdicts_csv()));
            if !self.paths.is_empty() {
                files.push(("paths.csv", self.paths_csv()));
            }
        }
        for (name, body) in &files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(files.into_iter().map(|(n, _)| n.to_string()).collect())
    }
}

/// Wall-clock record kept apart from the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub experiment: String,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub within_budget: bool,
}

impl Timing {
    pub fn write(&self, dir: &Path) -> Result<(), LabError> {
        std::fs::create_dir_all(dir)?;
        let mut s = serde_json::to_string_pretty(self).expect("timing serializes");
        s.push('\n');
        std::fs::write(dir.join("timing.json"), s)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_statuses() {
        assert_eq!(Status::at_most(1.0, 0.5, 2.0), Status::Pass);
        assert_eq!(Status::at_most(2.0, 0.5, 2.2), Status::Inconclusive);
        assert_eq!(Status::at_most(3.0, 0.5, 2.0), Status::Fail);
        assert_eq!(Status::at_least(3.0, 0.5, 2.0), Status::Pass);
        assert_eq!(Status::at_most(f64::NAN, 0.0, 1.0), Status::Inconclusive);
        assert!(Status::Fail > Status::Inconclusive && Status::Inconclusive > Status::Pass);
    }

    #[test]
    fn formats_parse() {
        assert_eq!(Format::parse_list("json,csv").unwrap(), vec![Format::Json, Format::Csv]);
        assert!(Format::parse_list("xml").is_err());
    }
}
