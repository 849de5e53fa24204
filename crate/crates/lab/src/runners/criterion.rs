//! Remainder sequence `u_n(t₀)` per anchor, with the Fourier-oracle
//! comparison when the field has constant coefficients.

use sdechaos::chaos::{
    chaos_kernel, classify, criterion_remainder, laplace_criterion, CriterionState, LaplaceSeries, Trend,
};
use sdechaos::oracle::{GaussianOracle, Letter};
use sdechaos::pde::{
    contour_semigroup, evolve_semigroup, q_operator, ContourTable, DiscreteField, OperatorContext,
    DEFAULT_CONTOUR_NODES,
};

use crate::config::ExperimentConfig;
use crate::report::{Report, Status};
use crate::runners::attempt;
use crate::setup::{self, boundary_guard};
use crate::LabError;

const AC: &str = "AC4";
const ORACLE: &str = "AC1";
const GUARD: &str = "AC7";

/// Time tuples at which kernels of order 1..3 are compared, as fractions of `t`.
pub(crate) const KERNEL_TUPLES: [&[f64]; 3] = [&[0.6], &[0.6, 0.2], &[0.8, 0.5, 0.2]];

pub(crate) fn trend_label(t: Trend) -> &'static str {
    match t {
        Trend::Decays => "decays",
        Trend::Plateaus => "plateaus",
        Trend::Inconclusive => "inconclusive",
    }
}

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    if config.chaos.depth < 2 {
        return Err(LabError::Config("criterion needs chaos.depth ≥ 2".into()));
    }
    let mut report = Report::new("criterion", config);
    let field = setup::field(config)?;
    let ctx = setup::context(config, &field, config.grid.n)?;
    let f = setup::sample_f(config, &ctx);
    let tree = setup::tree(config);
    let mut leak = ctx.max_leak_ratio();

    let anchors: Vec<(Vec<f64>, Option<Trend>)> = if config.criterion.anchors.is_empty() {
        vec![(config.x0.clone(), None)]
    } else {
        config.criterion.anchors.iter().map(|a| (a.x0.clone(), a.expect)).collect()
    };

    // the first anchor at x₀ feeds the oracle comparison
    let mut at_x0: (Option<CriterionState>, Option<LaplaceSeries>) = (None, None);
    for (i, (x0, expect)) in anchors.iter().enumerate() {
        let label = format!("anchor{}", i + 1);
        let Some(state) = attempt(&mut report, &format!("remainders at {label}"), || {
            Ok(criterion_remainder(&ctx, &f, x0, config.t, config.chaos.depth, &tree)?)
        }) else {
            continue;
        };
        leak = leak.max(state.series.leak_ratio);
        anchor_verdicts(&mut report, config, &label, &state, *expect);
        let mut laplace = None;
        if config.chaos.nu > 0.0 && config.wants("laplace") {
            laplace = attempt(&mut report, &format!("Laplace variant at {label}"), || {
                Ok(laplace_criterion(&ctx, &f, x0, config.chaos.nu, config.chaos.depth, &tree)?)
            });
            if let Some(l) = &laplace {
                leak = leak.max(l.leak_ratio);
                for (n, v) in l.values.iter().enumerate() {
                    report.metric(format!("laplace-u{}@{label}", n + 1), *v, None);
                    report.point(format!("laplace@{label}"), (n + 1) as f64, *v, None);
                }
            }
        }
        if at_x0.0.is_none() && *x0 == config.x0 {
            at_x0 = (Some(state), laplace);
        }
    }

    if let Ok(oracle) = GaussianOracle::from_field(&field) {
        let (state, laplace) = (at_x0.0.as_ref(), at_x0.1.as_ref());
        leak = leak.max(oracle_checks(&mut report, config, &ctx, &f, &oracle, state, laplace)?);
    }

    // the Laplace weights reach about 1/ν past t
    let horizon = if config.chaos.nu > 0.0 { config.t.max(1.0 / config.chaos.nu) } else { config.t };
    let mut mass: f64 = 0.0;
    for (x0, _) in &anchors {
        mass = mass.max(setup::boundary_mass(&ctx, x0, horizon)?);
    }
    boundary_guard(&mut report, GUARD, mass, leak, None);
    Ok(report)
}

fn anchor_verdicts(report: &mut Report, config: &ExperimentConfig, label: &str, s: &CriterionState, expect: Option<Trend>) {
    for (n, (u, e)) in s.remainders.iter().zip(&s.errors).enumerate() {
        report.metric(format!("u{}@{label}", n + 1), *u, Some(*e));
        report.point(format!("remainder@{label}"), (n + 1) as f64, *u, Some(*e));
    }
    let trend = s.trend();
    let depth = s.remainders.len();
    let ratio = s.ratio(depth);
    let ratio_err = (s.errors[depth - 1] + ratio.abs() * s.errors[0]) / s.remainders[0].abs().max(f64::MIN_POSITIVE);
    report.metric(format!("ratio@{label}"), ratio, Some(ratio_err));
    if config.wants("monotone") {
        report.verdict(
            AC,
            format!("monotone@{label}"),
            Status::holds(s.is_monotone() && s.is_nonnegative()),
            ratio,
            ratio_err,
            1.0,
            "u_(n+1) ≤ u_n + ε and u_n ≥ −ε for all n",
        );
    }
    let Some(expect) = expect else { return };
    if config.wants("trend") {
        let status = if trend == expect {
            Status::Pass
        } else if trend == Trend::Inconclusive {
            Status::Inconclusive
        } else {
            Status::Fail
        };
        report.verdict(
            AC,
            format!("trend@{label}"),
            status,
            ratio,
            ratio_err,
            0.0,
            format!("classified {} (expected {})", trend_label(trend), trend_label(expect)),
        );
    }
    if config.wants("ratio") {
        let tol = &config.tolerances;
        let (status, threshold) = match expect {
            Trend::Plateaus => (Status::at_least(ratio, ratio_err, tol.plateau_ratio), tol.plateau_ratio),
            Trend::Decays => (Status::at_most(ratio, ratio_err, tol.decay_ratio), tol.decay_ratio),
            Trend::Inconclusive => (Status::Inconclusive, 0.0),
        };
        report.verdict(AC, format!("ratio@{label}"), status, ratio, ratio_err, threshold, format!("u_{depth}/u_1"));
    }
}

/// Relative comparison verdict against the closed form.
fn close(report: &mut Report, config: &ExperimentConfig, check: &str, got: f64, exact: f64, scale: f64) {
    let err = (got - exact).abs() / scale.abs().max(f64::MIN_POSITIVE);
    report.metric(format!("{check}:numeric"), got, None);
    report.metric(format!("{check}:oracle"), exact, None);
    report.verdict(
        ORACLE,
        check,
        Status::holds(err <= config.tolerances.relative),
        err,
        0.0,
        config.tolerances.relative,
        format!("{got:.8e} vs {exact:.8e}"),
    );
}

/// All constant-coefficient comparisons at `(t, x₀)`; returns the worst leak seen.
fn oracle_checks(
    report: &mut Report,
    config: &ExperimentConfig,
    ctx: &OperatorContext,
    f: &DiscreteField,
    oracle: &GaussianOracle,
    state: Option<&CriterionState>,
    laplace: Option<&LaplaceSeries>,
) -> Result<f64, LabError> {
    let (t, x0, g) = (config.t, &config.x0, &config.f);
    let d1 = ctx.field().noise_dim();
    let leak = ctx.max_leak_ratio();

    let heat = oracle.semigroup(g, t, x0)?;
    if config.wants("oracle-semigroup") {
        let u = evolve_semigroup(ctx, f, t, t / 256.0)?;
        close(report, config, "oracle-semigroup", u.interpolate(x0), heat, heat);
    }
    if config.wants("oracle-contour") {
        let u = contour_semigroup(ctx, f, t, &ContourTable::parabolic(DEFAULT_CONTOUR_NODES))?;
        close(report, config, "oracle-contour", u.interpolate(x0), heat, heat);
    }
    if config.wants("oracle-q") {
        let exact: Vec<f64> = (0..d1).map(|k| oracle.word(g, &[Letter::Q(k, t)], x0)).collect::<Result<_, _>>()?;
        let scale = exact.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for (k, e) in exact.iter().enumerate() {
            let q = q_operator(ctx, k, t, f, None, t / 128.0)?;
            close(report, config, &format!("oracle-q{k}"), q.interpolate(x0), *e, scale);
        }
    }
    if config.wants("oracle-kernels") {
        for (m, frac) in KERNEL_TUPLES.iter().enumerate().map(|(i, f)| (i + 1, *f)) {
            let times: Vec<f64> = frac.iter().map(|s| s * t).collect();
            let mis = multi_indices(m, d1);
            let exact: Vec<f64> = mis.iter().map(|mi| oracle.kernel(g, mi, t, x0)).collect::<Result<_, _>>()?;
            let scale = exact.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for (mi, e) in mis.iter().zip(&exact) {
                let got = chaos_kernel(ctx, m, mi, f, x0)?.eval(t, &times)?;
                let tag: String = mi.iter().map(|k| k.to_string()).collect();
                close(report, config, &format!("oracle-kernel-{tag}"), got, *e, scale);
            }
        }
    }
    let Some(s) = state else { return Ok(leak) };
    let depth = s.remainders.len();
    if config.wants("oracle-norm-identity") {
        let var = oracle.variance(g, t, x0)?;
        close(report, config, "oracle-variance", s.series.variance, var, var);
        for m in 1..=depth {
            let c = oracle.chaos_level(g, t, x0, m)?;
            close(report, config, &format!("oracle-c{m}"), s.series.levels[m - 1], c, c);
        }
        let closing = s.series.levels.iter().sum::<f64>() + s.series.remainders[depth];
        let defect = (s.series.variance - closing).abs() / var;
        report.verdict(
            ORACLE,
            "oracle-identity-defect",
            Status::holds(defect <= config.tolerances.relative),
            defect,
            0.0,
            config.tolerances.relative,
            "|Var − Σ c_m − u_(N+1)| / Var",
        );
    }
    if config.wants("oracle-remainders") {
        let exact: Vec<f64> = (1..=depth).map(|n| oracle.remainder(g, t, x0, n)).collect::<Result<_, _>>()?;
        for (n, e) in exact.iter().enumerate() {
            close(report, config, &format!("oracle-u{}", n + 1), s.remainders[n], *e, *e);
        }
        let expected = classify(&exact, &vec![0.0; depth]);
        report.verdict(
            ORACLE,
            "oracle-trend",
            Status::holds(s.trend() == expected),
            s.ratio(depth),
            0.0,
            exact[depth - 1] / exact[0],
            format!("classified {} (oracle {})", trend_label(s.trend()), trend_label(expected)),
        );
    }
    if config.wants("oracle-laplace") && config.chaos.nu > 0.0 {
        let nu = config.chaos.nu;
        let fresh;
        let l = match laplace {
            Some(l) => l,
            None => {
                fresh = laplace_criterion(ctx, f, x0, nu, depth, &setup::tree(config))?;
                &fresh
            }
        };
        for n in 1..=depth {
            let e = oracle.laplace(g, nu, x0, n)?;
            close(report, config, &format!("oracle-laplace{n}"), l.values[n - 1], e, e);
        }
        return Ok(leak.max(l.leak_ratio));
    }
    Ok(leak)
}

pub(crate) fn multi_indices(m: usize, d1: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out.into_iter().flat_map(|mi: Vec<usize>| (0..d1).map(move |k| [mi.clone(), vec![k]].concat())).collect();
    }
    out
}
