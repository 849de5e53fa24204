//! Feynman–Kac agreement, energy identity and martingale representation.
//!
//! The PDE side gives `T_t f` at every probe and the variance
//! `T_t f² − (T_t f)²`; the MC side runs Euler paths and, along each path,
//! the stochastic integral and energy of `σ·∇T_{t−s} f` read from a
//! gradient ladder. The refinement check repeats the residual at half the
//! grid, half the ladder nodes and one dyadic level less, on the same noise.

use sdechaos::chaos::norm_identity_check;
use sdechaos::mc::{ensemble_map, GradientLadder};
use sdechaos::pde::evolve_semigroup;
use sdechaos::stats::{variance_estimate, Estimate};

use crate::config::ExperimentConfig;
use crate::report::{PathRow, Report, Status};
use crate::runners::attempt;
use crate::setup::{self, boundary_guard, flags};
use crate::LabError;

const AC: &str = "AC2";
const GUARD: &str = "AC7";

struct PathData {
    value: f64,
    energy: f64,
    residual: f64,
    exited: bool,
    clamped: bool,
}

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    let mut report = Report::new("identity", config);
    let field = setup::field(config)?;
    let n = config.grid.n;
    let ctx = setup::context(config, &field, n)?;
    let f = setup::sample_f(config, &ctx);
    let t = config.t;
    let nodes = config.chaos.table_nodes;
    let level = config.paths.level;
    let mut leak = ctx.max_leak_ratio();
    let mut exits: f64 = 0.0;

    let pde = evolve_semigroup(&ctx, &f, t, t / 256.0)?;
    let var = norm_identity_check(&ctx, &f, &config.x0, t, 0, &setup::tree(config))?.lhs;
    report.metric("pde-variance", var, None);

    let ladder = GradientLadder::build(&ctx, &f, &config.x0, t, nodes)?;
    leak = leak.max(ladder.leak_ratio);
    report.metric("pde-mean", ladder.mean, None);

    let opts = setup::ensemble(config, level, setup::euler(config, n));
    let rows = attempt(&mut report, "ensemble at x0", || {
        Ok(ensemble_map(&field, &config.x0, t, config.paths.n_paths, &opts, |w, x| {
            let value = config.f.eval(x.endpoint());
            Ok(PathData {
                value,
                energy: ladder.energy(x)?,
                residual: value - ladder.mean - ladder.martingale(w, x)?,
                exited: x.exited(),
                clamped: x.clamped,
            })
        })?)
    });

    let k = config.tolerances.sigmas;
    if let Some(rows) = &rows {
        let kept: Vec<&PathData> = rows.iter().filter(|r| !r.exited).collect();
        exits = exits.max(1.0 - kept.len() as f64 / rows.len() as f64);
        report.paths = rows
            .iter()
            .enumerate()
            .map(|(i, r)| PathRow { path_id: i as u64, t, value: r.value, flags: flags(r.exited, r.clamped) })
            .collect();

        if config.wants("fk-agreement") {
            let values: Vec<f64> = kept.iter().map(|r| r.value).collect();
            fk_verdict(&mut report, "x0", &values, pde.interpolate(&config.x0), k);
        }

        if config.wants("energy-identity") {
            let energy: Vec<f64> = kept.iter().map(|r| r.energy).collect();
            let rhs = Estimate::from_samples(&energy);
            report.metric("energy-rhs", rhs.mean, Some(rhs.std_err));
            let scale = var.abs().max(f64::MIN_POSITIVE);
            let defect = (var - rhs.mean).abs() / scale;
            report.verdict(
                AC,
                "energy-identity",
                Status::at_most(defect, k * rhs.std_err / scale, config.tolerances.energy),
                defect,
                k * rhs.std_err / scale,
                config.tolerances.energy,
                format!("PDE variance {var:.6e} vs MC energy {:.6e} ± {:.2e}", rhs.mean, rhs.std_err),
            );
        }

        let residuals: Vec<f64> = kept.iter().map(|r| r.residual).collect();
        if config.wants("martingale-mean") {
            let m = Estimate::from_samples(&residuals);
            let z = m.mean.abs() / m.std_err.max(f64::MIN_POSITIVE);
            report.metric("martingale-residual-mean", m.mean, Some(m.std_err));
            report.verdict(
                AC,
                "martingale-mean",
                Status::holds(m.mean.abs() <= k * m.std_err),
                z,
                0.0,
                k,
                format!("residual mean {:.3e} ± {:.2e}", m.mean, m.std_err),
            );
        }

        if config.wants("martingale-refinement") {
            let fine_var = variance_estimate(&residuals);
            report.metric("martingale-residual-variance", fine_var.mean, Some(fine_var.std_err));
            let coarse = attempt(&mut report, "coarse martingale run", || {
                coarse_residuals(config, &field, rows.len())
            });
            if let Some((coarse, coarse_leak)) = coarse {
                leak = leak.max(coarse_leak);
                let diffs: Vec<f64> = rows
                    .iter()
                    .zip(&coarse)
                    .filter(|(r, c)| !r.exited && !c.1)
                    .map(|(r, c)| c.0 * c.0 - r.residual * r.residual)
                    .collect();
                let gain = Estimate::from_samples(&diffs);
                let coarse_vals: Vec<f64> = coarse.iter().filter(|c| !c.1).map(|c| c.0).collect();
                let cv = variance_estimate(&coarse_vals);
                report.metric("martingale-residual-variance-coarse", cv.mean, Some(cv.std_err));
                report.point("martingale-residual-variance", (nodes / 2) as f64, cv.mean, Some(cv.std_err));
                report.point("martingale-residual-variance", nodes as f64, fine_var.mean, Some(fine_var.std_err));
                report.verdict(
                    AC,
                    "martingale-refinement",
                    Status::at_least(gain.mean, k * gain.std_err, 0.0),
                    gain.mean,
                    k * gain.std_err,
                    0.0,
                    format!("mean squared residual drops by {:.3e} ± {:.2e} under one doubling", gain.mean, gain.std_err),
                );
            }
        }
    }

    if config.wants("fk-agreement") {
        for (i, p) in config.probes.iter().enumerate() {
            let label = format!("probe{}", i + 1);
            let values = attempt(&mut report, &format!("ensemble at {label}"), || {
                Ok(ensemble_map(&field, p, t, config.paths.n_paths, &opts, |_, x| {
                    Ok((x.exited(), config.f.eval(x.endpoint())))
                })?)
            });
            if let Some(values) = values {
                let kept: Vec<f64> = values.iter().filter(|v| !v.0).map(|v| v.1).collect();
                exits = exits.max(1.0 - kept.len() as f64 / values.len() as f64);
                fk_verdict(&mut report, &label, &kept, pde.interpolate(p), k);
            }
        }
    }

    let mut mass = setup::boundary_mass(&ctx, &config.x0, t)?;
    for p in &config.probes {
        mass = mass.max(setup::boundary_mass(&ctx, p, t)?);
    }
    boundary_guard(&mut report, GUARD, mass, leak, Some(exits));
    Ok(report)
}

fn fk_verdict(report: &mut Report, label: &str, values: &[f64], pde: f64, k: f64) {
    let mc = Estimate::from_samples(values);
    let z = (mc.mean - pde).abs() / mc.std_err.max(f64::MIN_POSITIVE);
    report.metric(format!("fk-mc@{label}"), mc.mean, Some(mc.std_err));
    report.metric(format!("fk-pde@{label}"), pde, None);
    let status = if values.len() < 100 { Status::Inconclusive } else { Status::holds(z <= k) };
    report.verdict(
        AC,
        format!("fk-agreement@{label}"),
        status,
        z,
        0.0,
        k,
        format!("MC {:.6e} ± {:.2e} vs PDE {pde:.6e} over {} paths", mc.mean, mc.std_err, values.len()),
    );
}

/// Residuals at half resolution on the same noise: `(residual, exited)` per path.
fn coarse_residuals(
    config: &ExperimentConfig,
    field: &sdechaos::fields::CoefficientField,
    n_paths: usize,
) -> Result<(Vec<(f64, bool)>, f64), LabError> {
    let n = (config.grid.n - 1) / 2 + 1;
    let ctx = setup::context(config, field, n)?;
    let f = setup::sample_f(config, &ctx);
    let nodes = (config.chaos.table_nodes / 2).max(1);
    let level = config.paths.level.saturating_sub(1);
    let ladder = GradientLadder::build(&ctx, &f, &config.x0, config.t, nodes)?;
    let opts = setup::ensemble(config, level, setup::euler(config, n));
    let rows = ensemble_map(field, &config.x0, config.t, n_paths, &opts, |w, x| {
        let r = config.f.eval(x.endpoint()) - ladder.mean - ladder.martingale(w, x)?;
        Ok((r, x.exited()))
    })?;
    Ok((rows, ctx.max_leak_ratio().max(ladder.leak_ratio)))
}
