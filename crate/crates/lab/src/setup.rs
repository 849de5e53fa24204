//! Objects shared by the runners: field, grid operator, sampled `f`, seeds.

use sdechaos::fields::CoefficientField;
use sdechaos::mc::{EnsembleOptions, EulerOptions, MAX_EXIT_FRACTION};
use sdechaos::pde::{make_grid, DiscreteField, OperatorContext, PointProbe, ProbeOptions, BOUNDARY_LEAK_THRESHOLD};
use sdechaos::stats::mix_seed;

use crate::config::ExperimentConfig;
use crate::report::{Report, Status};
use crate::LabError;

/// Stream tags; each sub-run draws from its own seed.
pub mod stream {
    pub const PATHS: u64 = 1;
    pub const BOOTSTRAP: u64 = 0x100;
    pub const TREE: u64 = 3;
}

pub fn sub_seed(config: &ExperimentConfig, tag: u64) -> u64 {
    mix_seed(config.seed(), tag)
}

pub fn field(config: &ExperimentConfig) -> Result<CoefficientField, LabError> {
    Ok(config.field.build()?)
}

/// Grid operator of `field` at `n` points per axis.
pub fn context(config: &ExperimentConfig, field: &CoefficientField, n: usize) -> Result<OperatorContext, LabError> {
    let grid = make_grid(field.dim(), config.grid.r_dom, n)?;
    Ok(OperatorContext::assemble(field, &grid, config.grid.lambda)?)
}

pub fn sample_f(config: &ExperimentConfig, ctx: &OperatorContext) -> DiscreteField {
    DiscreteField::sample(ctx.grid(), |x| config.f.eval(x))
}

/// Euler settings matching a grid of `n` points per axis.
pub fn euler(config: &ExperimentConfig, n: usize) -> EulerOptions {
    let h = 2.0 * config.grid.r_dom / (n - 1) as f64;
    let mut e = EulerOptions::for_grid(config.grid.r_dom, h);
    if let Some(l) = config.grid.lambda {
        e.lambda = l;
    }
    e
}

pub fn ensemble(config: &ExperimentConfig, level: u32, euler: EulerOptions) -> EnsembleOptions {
    EnsembleOptions { level, seed: sub_seed(config, stream::PATHS), euler }
}

/// Tree options with the tree seed derived from the master seed.
pub fn tree(config: &ExperimentConfig) -> sdechaos::chaos::TreeOptions {
    let mut t = config.chaos.tree.clone();
    t.seed = sub_seed(config, stream::TREE);
    t
}

/// Largest mass of the adjoint probe from `x0` in the boundary-adjacent
/// layer over `[0, t]`: the share of paths from `x0` that feel the
/// truncation, which bounds the truncation error of values at `x0`.
pub fn boundary_mass(ctx: &OperatorContext, x0: &[f64], t: f64) -> Result<f64, LabError> {
    let grid = ctx.grid();
    let layer: Vec<f64> = (0..grid.len()).map(|p| if grid.is_boundary_adjacent(p) { 1.0 } else { 0.0 }).collect();
    let layer = DiscreteField::from_values(grid, layer)?;
    let probe = PointProbe::build(ctx, x0, t, &[], &ProbeOptions::default())?;
    let mut worst: f64 = 0.0;
    for &tau in probe.times() {
        worst = worst.max(probe.value(tau, &layer)?);
    }
    Ok(worst)
}

/// Records the boundary guard from the probe mass and the MC exit share.
///
/// A tripped guard turns every other verdict of the report inconclusive:
/// their numbers rest on the truncated domain. The raw boundary-layer
/// monitor of the evolutions is kept as a metric and a warning note.
pub fn boundary_guard(report: &mut Report, criterion: &str, mass: f64, raw_leak: f64, exit_fraction: Option<f64>) {
    report.metric("boundary-mass", mass, None);
    report.metric("max-leak-ratio", raw_leak, None);
    if raw_leak > BOUNDARY_LEAK_THRESHOLD {
        report.note(format!("boundary-leak warning: layer ratio {raw_leak:.3e} above {BOUNDARY_LEAK_THRESHOLD:e}"));
    }
    if let Some(e) = exit_fraction {
        report.metric("exit-fraction", e, None);
    }
    let mass_ok = mass <= BOUNDARY_LEAK_THRESHOLD;
    let exit_ok = exit_fraction.is_none_or(|e| e <= MAX_EXIT_FRACTION);
    let detail = format!(
        "probe mass {mass:.3e} (limit {BOUNDARY_LEAK_THRESHOLD:e}), exit fraction {} (limit {MAX_EXIT_FRACTION})",
        exit_fraction.map(|e| format!("{e:.4}")).unwrap_or_else(|| "n/a".into())
    );
    let status = Status::holds(mass_ok && exit_ok);
    if status == Status::Fail {
        for v in &mut report.verdicts {
            if v.status != Status::Inconclusive {
                v.status = Status::Inconclusive;
                v.detail.push_str("; boundary guard tripped");
            }
        }
    }
    report.verdict(criterion, "boundary-guard", status, mass, 0.0, BOUNDARY_LEAK_THRESHOLD, detail);
}

pub fn flags(exited: bool, clamped: bool) -> String {
    match (exited, clamped) {
        (true, true) => "exited|clamped".into(),
        (true, false) => "exited".into(),
        (false, true) => "clamped".into(),
        (false, false) => String::new(),
    }
}
