//! Pathwise chaos reconstruction against Euler endpoints on the same noise.
//!
//! `MSE(M) = E(f(x_t) − T_t f(x₀) − Σ_{m≤M} I_m)²` should equal the chaos
//! tail `u_{M+1}`. The bar on each comparison adds the Monte Carlo error,
//! the change of `MSE(M)` when the kernel table is halved, and the
//! quadrature bar of the tail.

use sdechaos::chaos::chaos_series;
use sdechaos::mc::{ensemble_map, ChaosTable};
use sdechaos::stats::Estimate;

use crate::config::ExperimentConfig;
use crate::report::{PathRow, Report, Status};
use crate::setup::{self, boundary_guard, flags};
use crate::LabError;

const AC: &str = "AC3";
const GUARD: &str = "AC7";

struct PathData {
    value: f64,
    /// Partial sums `Σ_{m≤M} I_m` for `M = 0..=order`, fine then coarse table.
    fine: Vec<f64>,
    coarse: Vec<f64>,
    exited: bool,
    clamped: bool,
}

fn partial_sums(levels: &[f64]) -> Vec<f64> {
    std::iter::once(0.0)
        .chain(levels.iter().scan(0.0, |acc, l| {
            *acc += l;
            Some(*acc)
        }))
        .collect()
}

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    let mut report = Report::new("reconstruct", config);
    let field = setup::field(config)?;
    let n = config.grid.n;
    let ctx = setup::context(config, &field, n)?;
    let f = setup::sample_f(config, &ctx);
    let (t, x0) = (config.t, &config.x0);
    let order = config.chaos.order;
    let depth = config.chaos.depth.max(order + 1);

    let series = chaos_series(&ctx, &f, x0, t, depth, &setup::tree(config))?;
    let nodes = config.chaos.table_nodes;
    let fine = ChaosTable::build(&ctx, &f, x0, t, order, nodes)?;
    let coarse = ChaosTable::build(&ctx, &f, x0, t, order, (nodes / 2).max(1))?;
    let leak = ctx.max_leak_ratio().max(series.leak_ratio).max(fine.leak_ratio).max(coarse.leak_ratio);
    report.metric("pde-mean", fine.mean, None);
    report.metric("pde-variance", series.variance, None);

    let opts = setup::ensemble(config, config.paths.level, setup::euler(config, n));
    let rows = ensemble_map(&field, x0, t, config.paths.n_paths, &opts, |w, x| {
        Ok(PathData {
            value: config.f.eval(x.endpoint()),
            fine: partial_sums(&fine.levels(w, order)?),
            coarse: partial_sums(&coarse.levels(w, order)?),
            exited: x.exited(),
            clamped: x.clamped,
        })
    })?;
    report.paths = rows
        .iter()
        .enumerate()
        .map(|(i, r)| PathRow { path_id: i as u64, t, value: r.value, flags: flags(r.exited, r.clamped) })
        .collect();
    let kept: Vec<&PathData> = rows.iter().filter(|r| !r.exited).collect();
    let exits = 1.0 - kept.len() as f64 / rows.len().max(1) as f64;

    let k = config.tolerances.sigmas;
    let sq_err = |r: &PathData, m: usize, coarse_table: bool| {
        let (mean, sums) = if coarse_table { (coarse.mean, &r.coarse) } else { (fine.mean, &r.fine) };
        (r.value - mean - sums[m]).powi(2)
    };
    let mut worst_drop = Status::Pass;
    let mut drop_detail = Vec::new();
    for m in 0..=order {
        let errs: Vec<f64> = kept.iter().map(|r| sq_err(r, m, false)).collect();
        let mse = Estimate::from_samples(&errs);
        let half: Vec<f64> = kept.iter().map(|r| sq_err(r, m, true)).collect();
        let quad_bar = (mse.mean - Estimate::from_samples(&half).mean).abs();
        let tail = if m == 0 { series.variance } else { series.remainders[m] };
        let tail_bar = series.error_bar(m + 1);
        report.metric(format!("mse{m}"), mse.mean, Some(mse.std_err));
        report.metric(format!("tail{m}"), tail, Some(tail_bar));
        report.point("mse", m as f64, mse.mean, Some(mse.std_err));
        report.point("tail", m as f64, tail, Some(tail_bar));
        if m >= 1 && config.wants("mse-vs-tail") {
            let bar = k * mse.std_err + quad_bar + tail_bar;
            let gap = (mse.mean - tail).abs();
            report.verdict(
                AC,
                format!("mse-vs-tail@M{m}"),
                Status::holds(gap <= bar),
                gap,
                k * mse.std_err,
                bar,
                format!(
                    "MSE {:.5e} ± {:.1e} vs tail {tail:.5e}; bars: MC {:.1e}, table {quad_bar:.1e}, tail {tail_bar:.1e}",
                    mse.mean,
                    mse.std_err,
                    k * mse.std_err
                ),
            );
        }
        if m >= 1 {
            let drops: Vec<f64> = kept.iter().map(|r| sq_err(r, m - 1, false) - sq_err(r, m, false)).collect();
            let d = Estimate::from_samples(&drops);
            worst_drop = worst_drop.max(Status::at_least(d.mean, k * d.std_err, 0.0));
            drop_detail.push(format!("MSE({}) − MSE({m}) = {:.3e} ± {:.1e}", m - 1, d.mean, d.std_err));
        }
    }
    if order >= 1 && config.wants("mse-decreasing") {
        report.verdict(AC, "mse-decreasing", worst_drop, order as f64, 0.0, 0.0, drop_detail.join("; "));
    }

    let mass = setup::boundary_mass(&ctx, x0, t)?;
    boundary_guard(&mut report, GUARD, mass, leak, Some(exits));
    Ok(report)
}
