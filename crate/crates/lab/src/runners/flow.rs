//! Moment scalings of the Euler flow in time and space, and the
//! variational flow against same-noise finite differences.

use rayon::prelude::*;
use sdechaos::mc::{coupled_solve, euler_maruyama, variational_solve, EulerOptions, WienerPath};
use sdechaos::stats::{bootstrap_interval, linear_fit, Estimate};

use crate::config::ExperimentConfig;
use crate::report::{Report, Status};
use crate::setup::{self, stream};
use crate::LabError;

const AC: &str = "AC6";

/// Direction of the variational check.
const ETA: [f64; 2] = [0.6, 0.8];

/// Finite-difference gaps below this are rounding, not truncation.
const FD_ROUNDING: f64 = 1e-10;

#[derive(Clone)]
struct PathData {
    /// `|x_t − x_{t−lag}|^q` per time exponent.
    time: Vec<f64>,
    /// `|x_t(x) − x_t(y)|^κ` per space exponent.
    space: Vec<f64>,
    /// Largest relative change of `|x_t(x) − x_t(y)|` against `|x − y|`.
    space_drift: f64,
    /// `|ξ_t − (x_t(x₀ + εη) − x_t(x₀))/ε|` per step `ε`.
    fd: Vec<f64>,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

/// Slope of `ln mean(column)` against `ln x` over the rows.
fn log_slope(x: &[f64], rows: &[PathData], pick: fn(&PathData) -> &[f64]) -> f64 {
    let y: Vec<f64> = (0..x.len())
        .map(|i| (rows.iter().map(|r| pick(r)[i]).sum::<f64>() / rows.len() as f64).ln())
        .collect();
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &y).slope
}

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    let mut report = Report::new("flow", config);
    let field = setup::field(config)?;
    let d = field.dim();
    let fc = &config.flow;
    let (t, x0, level) = (config.t, config.x0.as_slice(), config.paths.level);
    if fc.time_exponents.iter().any(|&k| k < 0 || k as u32 > level) {
        return Err(LabError::Config("flow.time_exponents must lie in 0..=paths.level".into()));
    }
    let steps = 1usize << level;
    let lags: Vec<f64> = fc.time_exponents.iter().map(|&k| t * 0.5f64.powi(k)).collect();
    let seps: Vec<f64> = fc.space_exponents.iter().map(|&k| 0.5f64.powi(k)).collect();
    let mut starts = vec![x0.to_vec()];
    for s in &seps {
        let mut y = x0.to_vec();
        y[0] += s;
        starts.push(y);
    }
    let eta: Vec<f64> = (0..d).map(|i| ETA.get(i).copied().unwrap_or(0.0)).collect();
    let opts = EulerOptions::default();
    let seed = setup::sub_seed(config, stream::PATHS);

    let rows: Vec<PathData> = (0..config.paths.n_paths)
        .into_par_iter()
        .map(|i| {
            let w = WienerPath::sample(field.noise_dim(), t, level, seed, i as u64)?;
            let paths = coupled_solve(&vec![&field; starts.len()], &starts, &w, &opts)?;
            let base = &paths[0];
            let end = base.endpoint();
            let time = fc
                .time_exponents
                .iter()
                .map(|&k| {
                    let j = steps - (steps >> k);
                    norm(end.iter().zip(base.state(j)).map(|(a, b)| a - b)).powf(fc.q)
                })
                .collect();
            let gaps: Vec<f64> = paths[1..].iter().map(|p| norm(p.endpoint().iter().zip(end).map(|(a, b)| a - b))).collect();
            let space = gaps.iter().map(|g| g.powf(fc.kappa)).collect();
            let space_drift = gaps.iter().zip(&seps).map(|(g, s)| (g / s - 1.0).abs()).fold(0.0, f64::max);
            let xi = variational_solve(&field, x0, &eta, &w, &opts)?;
            let fd = fc
                .epsilons
                .iter()
                .map(|&eps| {
                    let y0: Vec<f64> = x0.iter().zip(&eta).map(|(a, e)| a + eps * e).collect();
                    let y = euler_maruyama(&field, &y0, &w, &opts)?;
                    Ok(norm((0..d).map(|c| (y.endpoint()[c] - end[c]) / eps - xi.endpoint()[c])))
                })
                .collect::<Result<_, sdechaos::Error>>()?;
            Ok(PathData { time, space, space_drift, fd })
        })
        .collect::<Result<_, sdechaos::Error>>()?;

    let level95 = 0.95;
    if config.wants("time-slope") {
        for (i, lag) in lags.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r.time[i]).collect();
            let e = Estimate::from_samples(&col);
            report.point("time-moment", *lag, e.mean, Some(e.std_err));
        }
        let slope = log_slope(&lags, &rows, |r| &r.time);
        let seed = setup::sub_seed(config, stream::BOOTSTRAP);
        let (lo, hi) = bootstrap_interval(&rows, fc.bootstrap, level95, seed, |s| log_slope(&lags, s, |r| &r.time));
        report.metric("time-slope", slope, Some(0.5 * (hi - lo)));
        let (a, b) = (fc.q / 2.0 - config.tolerances.time_slope_band, fc.q / 2.0 + config.tolerances.time_slope_band);
        let status = if lo >= a && hi <= b {
            Status::Pass
        } else if hi < a || lo > b {
            Status::Fail
        } else {
            Status::Inconclusive
        };
        report.verdict(
            AC,
            "time-slope",
            status,
            slope,
            0.5 * (hi - lo),
            config.tolerances.time_slope,
            format!("slope {slope:.4}, 95% bootstrap interval [{lo:.4}, {hi:.4}] against [{a}, {b}]"),
        );
    }

    if config.wants("space-exponent") {
        let threshold = fc.kappa - 2.0 * d as f64 - config.tolerances.space_margin;
        let drift = rows.iter().map(|r| r.space_drift).fold(0.0, f64::max);
        report.metric("space-max-relative-drift", drift, None);
        for (i, s) in seps.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r.space[i]).collect();
            let e = Estimate::from_samples(&col);
            report.point("space-moment", *s, e.mean, Some(e.std_err));
        }
        if drift <= 1e-12 {
            report.metric("space-exponent", fc.kappa, Some(0.0));
            report.verdict(
                AC,
                "space-exponent",
                Status::Pass,
                fc.kappa,
                0.0,
                threshold,
                "separations are preserved exactly; exponent κ",
            );
        } else {
            let exponent = log_slope(&seps, &rows, |r| &r.space);
            let seed = setup::sub_seed(config, stream::BOOTSTRAP + 1);
            let (lo, hi) = bootstrap_interval(&rows, fc.bootstrap, level95, seed, |s| log_slope(&seps, s, |r| &r.space));
            report.metric("space-exponent", exponent, Some(0.5 * (hi - lo)));
            let status = if lo >= threshold {
                Status::Pass
            } else if hi < threshold {
                Status::Fail
            } else {
                Status::Inconclusive
            };
            report.verdict(
                AC,
                "space-exponent",
                status,
                exponent,
                0.5 * (hi - lo),
                threshold,
                format!("exponent {exponent:.3}, 95% bootstrap interval [{lo:.3}, {hi:.3}]"),
            );
        }
    }

    if config.wants("variational-fd") && fc.epsilons.len() >= 2 {
        let k = config.tolerances.sigmas;
        let mut status = Status::Pass;
        let mut detail = Vec::new();
        for (i, eps) in fc.epsilons.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r.fd[i]).collect();
            let e = Estimate::from_samples(&col);
            report.metric(format!("fd-gap@{eps:e}"), e.mean, Some(e.std_err));
            report.point("fd-gap", *eps, e.mean, Some(e.std_err));
        }
        let mut worst = f64::INFINITY;
        let largest = rows.iter().flat_map(|r| r.fd.iter().copied()).fold(0.0, f64::max);
        if largest <= FD_ROUNDING {
            // Linear flows: the differences are exact up to rounding.
            worst = 0.0;
            detail.push(format!("largest gap {largest:.1e} is at rounding level"));
        }
        for i in 0..fc.epsilons.len() - 1 {
            if largest <= FD_ROUNDING {
                break;
            }
            let drops: Vec<f64> = rows.iter().map(|r| r.fd[i] - r.fd[i + 1]).collect();
            let e = Estimate::from_samples(&drops);
            worst = worst.min(e.mean);
            status = status.max(Status::at_least(e.mean, k * e.std_err, 0.0));
            detail.push(format!("gap({:e}) − gap({:e}) = {:.3e} ± {:.1e}", fc.epsilons[i], fc.epsilons[i + 1], e.mean, e.std_err));
        }
        report.verdict(AC, "variational-fd", status, worst, 0.0, 0.0, detail.join("; "));
    }
    Ok(report)
}
