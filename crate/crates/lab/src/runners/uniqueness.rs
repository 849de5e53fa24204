//! Common-noise ladders: mollified solutions against the base field's
//! Euler solution, duplicate solves with reversed accumulation, and
//! perturbed starting points.

use rayon::prelude::*;
use sdechaos::fields::{CoefficientField, FieldSpec};
use sdechaos::mc::{coupled_solve, euler_maruyama, EulerOptions, SdePath, WienerPath};
use sdechaos::stats::{bootstrap_interval, linear_fit, median, quantile};

use crate::config::ExperimentConfig;
use crate::report::{Report, Status};
use crate::setup::{self, stream};
use crate::LabError;

const AC: &str = "AC5";

fn sup_distance(a: &SdePath, b: &SdePath) -> f64 {
    (0..=a.steps())
        .map(|j| a.state(j).iter().zip(b.state(j)).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn max_abs_gap(a: &SdePath, b: &SdePath) -> f64 {
    a.states.iter().zip(&b.states).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

fn mollified(base: &FieldSpec, n: u32) -> FieldSpec {
    FieldSpec { mollification: Some(n), ..base.clone() }
}

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    let mut report = Report::new("uniqueness", config);
    let ladder = &config.uniqueness.ladder;
    let base = setup::field(config)?;
    let fields: Vec<CoefficientField> =
        ladder.iter().map(|&n| mollified(&config.field, n).build()).collect::<Result<_, _>>()?;
    let opts = EulerOptions::default();
    let (t, x0) = (config.t, config.x0.as_slice());
    let seed = setup::sub_seed(config, stream::PATHS);
    let d1 = base.noise_dim();
    let level = config.paths.level;

    // rows[i] = (sup-distance per ladder level, duplicate gap at the finest level)
    let rows: Vec<(Vec<f64>, f64)> = (0..config.paths.n_paths)
        .into_par_iter()
        .map(|i| {
            let w = WienerPath::sample(d1, t, level, seed, i as u64)?;
            let mut all: Vec<&CoefficientField> = vec![&base];
            all.extend(fields.iter());
            let paths = coupled_solve(&all, &vec![x0.to_vec(); all.len()], &w, &opts)?;
            let dist = paths[1..].iter().map(|p| sup_distance(p, &paths[0])).collect();
            let finest = fields.last().expect("ladder is non-empty");
            let reversed = euler_maruyama(finest, x0, &w, &EulerOptions { reverse_order: true, ..opts })?;
            Ok((dist, max_abs_gap(&reversed, paths.last().expect("ladder is non-empty"))))
        })
        .collect::<Result<_, sdechaos::Error>>()?;

    if config.wants("ladder-trend") {
        let dists: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        trend_verdicts(&mut report, config, "ladder", ladder, &dists);
    }

    if config.wants("duplicate-agreement") {
        let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        report.metric("duplicate-max-gap", worst, None);
        report.verdict(
            AC,
            "duplicate-agreement",
            Status::holds(worst <= config.tolerances.duplicate),
            worst,
            0.0,
            config.tolerances.duplicate,
            format!("largest coordinate gap over {} path pairs", rows.len()),
        );
    }

    if let (Some(spec), true) = (&config.uniqueness.shift_field, config.wants("shift-trend")) {
        let field = spec.build()?;
        let starts: Vec<Vec<f64>> = std::iter::once(x0.to_vec())
            .chain(ladder.iter().map(|&n| {
                let mut y = x0.to_vec();
                y[0] += 1.0 / n as f64;
                y
            }))
            .collect();
        let dists: Vec<Vec<f64>> = (0..config.paths.n_paths)
            .into_par_iter()
            .map(|i| {
                let w = WienerPath::sample(field.noise_dim(), t, level, seed, i as u64)?;
                let all = vec![&field; starts.len()];
                let paths = coupled_solve(&all, &starts, &w, &opts)?;
                Ok(paths[1..].iter().map(|p| sup_distance(p, &paths[0])).collect())
            })
            .collect::<Result<_, sdechaos::Error>>()?;
        trend_verdicts(&mut report, config, "shift", ladder, &dists);
    }
    Ok(report)
}

/// Quantiles per level and a strictly-decreasing verdict on the medians.
///
/// Each step compares medians through a paired bootstrap interval: pass when
/// it excludes zero from above, fail when it excludes zero from below.
fn trend_verdicts(report: &mut Report, config: &ExperimentConfig, name: &str, ladder: &[u32], dists: &[Vec<f64>]) {
    let levels = ladder.len();
    let column = |rows: &[Vec<f64>], l: usize| rows.iter().map(|r| r[l]).collect::<Vec<f64>>();
    let mut medians = Vec::with_capacity(levels);
    for (l, &n) in ladder.iter().enumerate() {
        let c = column(dists, l);
        let med = median(&c);
        medians.push(med);
        report.metric(format!("{name}-median@{n}"), med, None);
        report.metric(format!("{name}-q90@{n}"), quantile(&c, 0.9), None);
        report.point(format!("{name}-median"), n as f64, med, None);
    }
    if medians.iter().all(|&m| m > 0.0) && levels >= 2 {
        let x: Vec<f64> = ladder.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        report.metric(format!("{name}-rate"), -linear_fit(&x, &y).slope, None);
    }
    // Distances at rounding level carry no trend to bootstrap.
    let floor = config.tolerances.duplicate;
    let exact = dists.iter().all(|r| r.iter().all(|&v| v <= floor));
    let mut status = Status::Pass;
    let mut detail = Vec::new();
    let mut worst_low = f64::INFINITY;
    if exact {
        detail.push(format!("all distances are at rounding level (≤ {floor:e})"));
    } else {
        for l in 0..levels.saturating_sub(1) {
            let seed = setup::sub_seed(config, stream::BOOTSTRAP + 16 * l as u64);
            let (lo, hi) = bootstrap_interval(dists, config.flow.bootstrap, 0.95, seed, |rows| {
                median(&column(rows, l)) - median(&column(rows, l + 1))
            });
            worst_low = worst_low.min(lo);
            let step = if lo > 0.0 {
                Status::Pass
            } else if hi < 0.0 {
                Status::Fail
            } else {
                Status::Inconclusive
            };
            status = status.max(step);
            detail.push(format!("median({}) − median({}) ∈ [{lo:.3e}, {hi:.3e}]", ladder[l], ladder[l + 1]));
        }
    }
    report.verdict(
        AC,
        format!("{name}-trend"),
        status,
        if exact { 0.0 } else { worst_low },
        0.0,
        0.0,
        detail.join("; "),
    );
}
