use std::io::Write;

use serde::{Deserialize, Serialize};

use super::tree::{chaos_series, laplace_series, ChaosSeries, LaplaceSeries, TreeOptions};
use crate::error::{Error, Result};
use crate::pde::{DiscreteField, OperatorContext, PointProbe, ProbeOptions};
use crate::testfn::TestFunction;

/// `u_{n+1}/u_n` at or above this for two consecutive `n` counts as a plateau.
pub const PLATEAU_RATIO: f64 = 0.8;

/// `u_N/u_1` at or below this counts as decay.
pub const DECAY_RATIO: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Decays,
    Plateaus,
    Inconclusive,
}

/// Classifies a remainder sequence with per-entry error bars.
///
/// The plateau rule is a heuristic: two consecutive ratios at or above
/// [`PLATEAU_RATIO`] even after moving both ends against the claim.
pub fn classify(u: &[f64], errors: &[f64]) -> Trend {
    if u.len() < 2 {
        return Trend::Inconclusive;
    }
    let e = |i: usize| errors.get(i).copied().unwrap_or(0.0);
    let ratio_low = |i: usize| (u[i + 1] - e(i + 1)) / (u[i] + e(i));
    let plateau = u.len() >= 3 && (0..u.len() - 2).any(|i| ratio_low(i) >= PLATEAU_RATIO && ratio_low(i + 1) >= PLATEAU_RATIO);
    if plateau {
        return Trend::Plateaus;
    }
    let last = u.len() - 1;
    let lo = u[0] - e(0);
    if lo > 0.0 && (u[last] + e(last)) / lo <= DECAY_RATIO {
        return Trend::Decays;
    }
    Trend::Inconclusive
}

/// Criterion remainders `u_n(t₀)` at `x₀` and their diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionState {
    pub field: String,
    pub f: Option<TestFunction>,
    pub x0: Vec<f64>,
    pub t0: f64,
    /// `u_1..u_N`.
    pub remainders: Vec<f64>,
    pub errors: Vec<f64>,
    pub series: ChaosSeries,
    pub laplace: Option<LaplaceSeries>,
}

impl CriterionState {
    /// `u_{n+1} ≤ u_n + ε` along the sequence.
    pub fn is_monotone(&self) -> bool {
        self.remainders.windows(2).zip(self.errors.windows(2)).all(|(u, e)| u[1] <= u[0] + e[0] + e[1])
    }

    pub fn is_nonnegative(&self) -> bool {
        self.remainders.iter().zip(&self.errors).all(|(u, e)| *u >= -e)
    }

    pub fn trend(&self) -> Trend {
        classify(&self.remainders, &self.errors)
    }

    /// `u_n / u_1` (one-based `n`).
    pub fn ratio(&self, n: usize) -> f64 {
        self.remainders[n - 1] / self.remainders[0]
    }

    /// Table with header `n,u_n,error`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,u_n,error")?;
        for (i, (u, e)) in self.remainders.iter().zip(&self.errors).enumerate() {
            writeln!(w, "{},{u:e},{e:e}", i + 1)?;
        }
        Ok(())
    }
}

/// `u_1..u_n` at `(t₀, x₀)`, with error bars from the identity defects.
pub fn criterion_remainder(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    t0: f64,
    n: usize,
    opts: &TreeOptions,
) -> Result<CriterionState> {
    if n == 0 {
        return Err(Error::InvalidArgument("criterion needs n ≥ 1".into()));
    }
    let series = chaos_series(ctx, f, x0, t0, n, opts)?;
    let remainders = series.remainders[..n].to_vec();
    let errors = (1..=n).map(|m| series.error_bar(m)).collect();
    Ok(CriterionState {
        field: ctx.field().id().name().to_string(),
        f: None,
        x0: x0.to_vec(),
        t0,
        remainders,
        errors,
        series,
        laplace: None,
    })
}

/// The Laplace-weighted criterion values for `n = 1..depth`.
pub fn laplace_criterion(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    nu: f64,
    depth: usize,
    opts: &TreeOptions,
) -> Result<LaplaceSeries> {
    laplace_series(ctx, f, x0, nu, depth, opts)
}

/// Norm identity `Var f(x_t) = Σ_{m≤n} c_m + u_{n+1}` at `x₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormIdentityReport {
    pub lhs: f64,
    pub levels: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub remainder: f64,
    pub defect: f64,
    pub relative_defect: f64,
}

/// Checks the norm identity through level `n`; `n = 0` reports the variance as remainder.
///
/// For `n ≥ 1` the remainder `u_{n+1} = u_n − c_n` rests on `u_n` computed
/// from the level-`n` fields, so the defect compares two independent paths.
pub fn norm_identity_check(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    t: f64,
    n: usize,
    opts: &TreeOptions,
) -> Result<NormIdentityReport> {
    if n == 0 {
        let probe_opts = ProbeOptions { dt_max: opts.probe_dt_max, ..ProbeOptions::default() };
        let probe = PointProbe::build(ctx, x0, t, &[], &probe_opts)?;
        let mean = probe.value(t, f)?;
        let var = probe.value(t, &f.map(|v| v * v))? - mean * mean;
        return Ok(NormIdentityReport {
            lhs: var,
            levels: vec![],
            partial_sums: vec![],
            remainder: var,
            defect: 0.0,
            relative_defect: 0.0,
        });
    }
    let s = chaos_series(ctx, f, x0, t, n, opts)?;
    let partial_sums: Vec<f64> = s
        .levels
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    let remainder = s.remainders[n];
    let defect = (s.variance - partial_sums[n - 1] - remainder).abs();
    Ok(NormIdentityReport {
        lhs: s.variance,
        levels: s.levels,
        partial_sums,
        remainder,
        defect,
        relative_defect: defect / s.variance.abs().max(f64::MIN_POSITIVE),
    })
}
