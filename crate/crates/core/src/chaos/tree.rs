use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simplex::graded_rule;
use crate::error::{Error, Result};
use crate::pde::{
    evolve_with_stops, gradient, resolvent_solve_with, sigma_contract, DiscreteField, OperatorContext, PointProbe,
    ProbeOptions, StepPolicy, LADDER_RATIO,
};
use crate::pde::solver::DEFAULT_TOL;
use crate::quad::{gauss_laguerre, gauss_legendre, pairwise_sum};
use crate::stats::mix_seed as mix;

/// Quadrature and enumeration settings shared by the chaos computations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeOptions {
    /// Gauss–Legendre nodes per level; the last entry repeats.
    pub nodes: Vec<usize>,
    /// Largest number of multi-indices enumerated exactly.
    pub index_budget: usize,
    /// Replicate trees when multi-indices are sampled.
    pub replicates: usize,
    pub seed: u64,
    /// Step growth of the forward evolutions.
    pub growth: f64,
    /// Largest step as a fraction of each evolution horizon.
    pub max_step_fraction: f64,
    /// Largest step of the adjoint probe evolution.
    pub probe_dt_max: f64,
    /// Cosine grading of each ordered-time rule toward both ends.
    pub graded: bool,
    /// Half-line rule of the Laplace variant.
    pub laplace_rule: HalfLineRule,
    /// Nodes per level of the Laplace variant.
    pub laplace_nodes: usize,
    /// Step growth and largest step fraction of the Laplace evolutions.
    pub laplace_growth: f64,
    pub laplace_step_fraction: f64,
    /// Tail bound `e^{−ν T_max}` of the Laplace variant.
    pub tail_tol: f64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            nodes: vec![8, 6, 8],
            index_budget: 64,
            replicates: 3,
            seed: 0,
            growth: 0.25,
            max_step_fraction: 1.0 / 24.0,
            probe_dt_max: 0.01,
            graded: true,
            laplace_rule: HalfLineRule::MappedLegendre,
            laplace_nodes: 6,
            laplace_growth: 0.25,
            laplace_step_fraction: 1.0 / 24.0,
            tail_tol: 1e-6,
        }
    }
}

impl TreeOptions {
    fn nodes_at(&self, level: usize) -> usize {
        let i = (level - 1).min(self.nodes.len() - 1);
        self.nodes[i]
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() || self.nodes.contains(&0) {
            return Err(Error::InvalidArgument("every level needs at least one node".into()));
        }
        if self.index_budget == 0 || self.replicates == 0 {
            return Err(Error::InvalidArgument("index budget and replicates must be positive".into()));
        }
        Ok(())
    }

    fn policy(&self, first_stop: f64, horizon: f64) -> StepPolicy {
        step_policy(first_stop, horizon * self.max_step_fraction, self.growth)
    }

    fn laplace_policy(&self, first_stop: f64, horizon: f64) -> StepPolicy {
        step_policy(first_stop, horizon * self.laplace_step_fraction, self.laplace_growth)
    }
}

fn step_policy(first_stop: f64, dt_max: f64, growth: f64) -> StepPolicy {
    StepPolicy { dt0: (0.5 * first_stop).min(dt_max), dt_max, growth, tol: DEFAULT_TOL, transpose: false }
}

/// Quadrature for `∫_0^∞ e^{−νs} h(s) ds`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HalfLineRule {
    GaussLaguerre,
    /// Gauss–Legendre in `u = 1 − e^{−νs}`.
    MappedLegendre,
}

impl HalfLineRule {
    /// `(s_j, w_j)` with `Σ w_j h(s_j) ≈ ∫_0^∞ e^{−νs} h(s) ds`.
    fn nodes(self, n: usize, nu: f64) -> Vec<(f64, f64)> {
        match self {
            HalfLineRule::GaussLaguerre => gauss_laguerre(n).into_iter().map(|(x, w)| (x / nu, w / nu)).collect(),
            HalfLineRule::MappedLegendre => gauss_legendre(n)
                .into_iter()
                .map(|(x, w)| {
                    let u = 0.5 * (x + 1.0);
                    (-(1.0 - u).ln() / nu, 0.5 * w / nu)
                })
                .collect(),
        }
    }
}

fn time_rule(n: usize, graded: bool) -> Vec<(f64, f64)> {
    if graded {
        graded_rule(n)
    } else {
        gauss_legendre(n).into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
    }
}

/// Children kept per parent when descending from level `ℓ` (index `ℓ − 1`).
fn keep_counts(d1: usize, depth: usize, budget: usize) -> Vec<usize> {
    if (d1 as f64).powi(depth as i32) <= budget as f64 {
        return vec![d1; depth.saturating_sub(1)];
    }
    let mut tracked = 1usize;
    (1..depth)
        .map(|_| {
            let k = (budget / (tracked * d1).max(1)).clamp(1, d1);
            tracked *= k;
            k
        })
        .collect()
}

/// `keep` of `d1` channels for quadrature node `node`, without replacement.
fn choose(seed: u64, node: u64, keep: usize, d1: usize) -> Vec<usize> {
    if keep == d1 {
        return (0..d1).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, node));
    let mut s = sample(&mut rng, d1, keep).into_vec();
    s.sort_unstable();
    s
}

fn channels_and_energy(ctx: &OperatorContext, u: &DiscreteField) -> (Vec<DiscreteField>, DiscreteField) {
    let d1 = ctx.field().noise_dim();
    let grad = gradient(u);
    let channels: Vec<DiscreteField> = (0..d1).map(|k| sigma_contract(ctx, k, &grad)).collect();
    let mut energy = DiscreteField::zeros(&u.grid);
    for (p, e) in energy.values.iter_mut().enumerate() {
        *e = channels.iter().map(|c| c.values[p] * c.values[p]).sum();
    }
    (channels, energy)
}

/// Chaos quantities at `(t, x₀)` up to level `N`.
///
/// `levels[m−1] = c_m`, the level-`m` contribution to `Var f(x_t)`;
/// `remainders[n−1] = u_n` for `n = 1..N+1`, the last one implied by
/// `u_{N+1} = u_N − c_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosSeries {
    pub t: f64,
    pub x0: Vec<f64>,
    /// `T_t f(x₀)`.
    pub mean: f64,
    /// `T_t f²(x₀) − (T_t f(x₀))²`.
    pub variance: f64,
    pub levels: Vec<f64>,
    pub remainders: Vec<f64>,
    /// `|Var − u_1|`, then `|u_n − c_n − u_{n+1}|` for `n < N`.
    pub defects: Vec<f64>,
    /// Replicate standard error of `(c_m, u_m)` when multi-indices are sampled.
    pub index_error: Vec<f64>,
    pub sampled: bool,
    pub evolutions: usize,
    pub leak_ratio: f64,
}

impl ChaosSeries {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Quadrature error bar of `u_n`: the largest identity defect plus index-sampling error.
    pub fn error_bar(&self, n: usize) -> f64 {
        let defect = self.defects.iter().copied().fold(0.0, f64::max);
        defect + self.index_error.get(n.saturating_sub(1)).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
struct Tally {
    c: Vec<f64>,
    u: Vec<f64>,
    evolutions: usize,
    leak: f64,
}

impl Tally {
    fn new(depth: usize) -> Self {
        Self { c: vec![0.0; depth], u: vec![0.0; depth], evolutions: 0, leak: 0.0 }
    }

    fn merge(mut self, other: &Tally) -> Self {
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += b;
        }
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += b;
        }
        self.evolutions += other.evolutions;
        self.leak = self.leak.max(other.leak);
        self
    }
}

/// A level-1 channel awaiting expansion.
struct Branch {
    field: DiscreteField,
    t: f64,
    weight: f64,
    node: u64,
    k: usize,
}

#[derive(Clone)]
struct Walker<'a> {
    ctx: &'a OperatorContext,
    probe: &'a PointProbe,
    opts: &'a TreeOptions,
    depth: usize,
    keep: Vec<usize>,
    seed: u64,
}

impl Walker<'_> {
    fn chosen(&self, level: usize, node: u64) -> Vec<usize> {
        choose(self.seed, node, self.keep[level - 1], self.ctx.field().noise_dim())
    }

    /// Expands `parent` (a level-`level − 1` field at time `t_prev`) into level `level`.
    ///
    /// Level-`level` leaves go into the tally. Children are expanded in place,
    /// or all returned unexpanded with `collect`.
    #[allow(clippy::too_many_arguments)]
    fn expand(
        &self,
        level: usize,
        parent: &DiscreteField,
        t_prev: f64,
        weight: f64,
        id: u64,
        tally: &mut Tally,
        mut collect: Option<&mut Vec<Branch>>,
    ) -> Result<()> {
        let d1 = self.ctx.field().noise_dim();
        let mut nodes: Vec<(f64, f64, f64)> = time_rule(self.opts.nodes_at(level), self.opts.graded)
            .into_iter()
            .map(|(v, w)| (t_prev * (1.0 - v), t_prev * v, t_prev * w))
            .collect();
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let stops: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let policy = self.opts.policy(stops[0], t_prev);
        let stats = evolve_with_stops(self.ctx, parent, &stops, &policy, |i, u| {
            let (_, tau, w) = nodes[i];
            let w = weight * w;
            let (channels, energy) = channels_and_energy(self.ctx, u);
            let mut refs: Vec<&DiscreteField> = channels.iter().collect();
            refs.push(&energy);
            let vals = self.probe.values(tau, &refs)?;
            tally.c[level - 1] += w * vals[..d1].iter().map(|v| v * v).sum::<f64>();
            tally.u[level - 1] += w * vals[d1];
            if level < self.depth {
                let node = mix(id, i as u64 + 1);
                if let Some(out) = collect.as_deref_mut() {
                    for (k, field) in channels.into_iter().enumerate() {
                        out.push(Branch { field, t: tau, weight: w, node, k });
                    }
                    return Ok(());
                }
                let scale = d1 as f64 / self.keep[level - 1] as f64;
                for k in self.chosen(level, node) {
                    self.expand(level + 1, &channels[k], tau, w * scale, mix(node, 1000 + k as u64), tally, None)?;
                }
            }
            Ok(())
        })?;
        tally.evolutions += 1;
        tally.leak = tally.leak.max(stats.leak_ratio);
        Ok(())
    }
}

/// Chaos levels `c_1..c_N` and remainders `u_1..u_{N+1}` of `f(x_t)`, `x_0 = x₀`.
///
/// Ordered times are integrated level by level with a graded Gauss–Legendre
/// rule; each parent field is evolved once with stops at all child gaps, and
/// `T_τ(·)(x₀)` is read from an adjoint probe.
pub fn chaos_series(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    t: f64,
    depth: usize,
    opts: &TreeOptions,
) -> Result<ChaosSeries> {
    opts.validate()?;
    if depth == 0 {
        return Err(Error::InvalidArgument("chaos depth must be ≥ 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("t must be positive".into()));
    }
    let d1 = ctx.field().noise_dim();
    let level1: Vec<f64> = time_rule(opts.nodes_at(1), opts.graded).iter().map(|(v, _)| t * v).collect();
    let probe_opts = ProbeOptions { ratio: LADDER_RATIO, dt_max: opts.probe_dt_max, ..ProbeOptions::default() };
    let probe = PointProbe::build(ctx, x0, t, &level1, &probe_opts)?;
    let f2 = f.map(|v| v * v);
    let mean = probe.value(t, f)?;
    let variance = probe.value(t, &f2)? - mean * mean;

    let keep = keep_counts(d1, depth, opts.index_budget);
    let sampled = keep.iter().any(|&k| k < d1);
    let replicates = if sampled { opts.replicates } else { 1 };

    let walker = Walker { ctx, probe: &probe, opts, depth, keep, seed: opts.seed };
    let mut top = Tally::new(depth);
    let mut branches = Vec::new();
    walker.expand(1, f, t, 1.0, 0, &mut top, Some(&mut branches))?;
    let mut runs = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let w = Walker { seed: mix(opts.seed, r as u64), ..walker.clone() };
        let scale = if depth > 1 { d1 as f64 / w.keep[0] as f64 } else { 1.0 };
        let live: Vec<&Branch> = branches.iter().filter(|b| w.chosen(1, b.node).contains(&b.k)).collect();
        let parts: Vec<Tally> = live
            .par_iter()
            .map(|b| {
                let mut tl = Tally::new(depth);
                w.expand(2, &b.field, b.t, b.weight * scale, mix(b.node, 1000 + b.k as u64), &mut tl, None)?;
                Ok(tl)
            })
            .collect::<Result<_>>()?;
        runs.push(parts.iter().fold(top.clone(), |acc, p| acc.merge(p)));
    }

    let n_runs = runs.len() as f64;
    let avg = |get: &dyn Fn(&Tally) -> &Vec<f64>, m: usize| runs.iter().map(|r| get(r)[m]).sum::<f64>() / n_runs;
    let levels: Vec<f64> = (0..depth).map(|m| avg(&|r: &Tally| &r.c, m)).collect();
    let mut remainders: Vec<f64> = (0..depth).map(|m| avg(&|r: &Tally| &r.u, m)).collect();
    let index_error = (0..depth)
        .map(|m| {
            if runs.len() < 2 {
                return 0.0;
            }
            let spread = |get: &dyn Fn(&Tally) -> &Vec<f64>, mean: f64| {
                runs.iter().map(|r| (get(r)[m] - mean).powi(2)).sum::<f64>() / (n_runs - 1.0)
            };
            (spread(&|r: &Tally| &r.c, levels[m]) + spread(&|r: &Tally| &r.u, remainders[m])).sqrt() / n_runs.sqrt()
        })
        .collect();
    let mut defects = vec![(variance - remainders[0]).abs()];
    for n in 0..depth - 1 {
        defects.push((remainders[n] - levels[n] - remainders[n + 1]).abs());
    }
    remainders.push(remainders[depth - 1] - levels[depth - 1]);
    let evolutions = runs.iter().map(|r| r.evolutions).sum();
    let leak_ratio = runs.iter().map(|r| r.leak).fold(probe.leak_ratio(), f64::max);
    ctx.record_leak(leak_ratio);
    Ok(ChaosSeries {
        t,
        x0: x0.to_vec(),
        mean,
        variance,
        levels,
        remainders,
        defects,
        index_error,
        sampled,
        evolutions,
        leak_ratio,
    })
}

/// Laplace-weighted remainders at `x₀`, `values[n−1]` for `n = 1..N`:
///
/// `∫_0^∞ e^{−ν s_n} T_{s_n}[∫_{ℝ₊ⁿ} e^{−ν(s_0+⋯+s_{n−1})} Σ_k (Q^{k_n}_{s_{n−1}}⋯Q^{k_1}_{s_0} f)² ds](x₀) ds_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSeries {
    pub nu: f64,
    pub x0: Vec<f64>,
    pub values: Vec<f64>,
    pub index_error: Vec<f64>,
    /// Horizon `T_max` with `e^{−ν T_max}` at the tail bound.
    pub t_max: f64,
    /// Nodes beyond `T_max`, dropped at every level.
    pub dropped_nodes: usize,
    pub sampled: bool,
    pub evolutions: usize,
    pub leak_ratio: f64,
}

struct LaplaceWalker<'a> {
    ctx: &'a OperatorContext,
    /// `(ν − Lᵀ)^{-1}` applied to the interpolation functional at `x₀`.
    adjoint: &'a [f64],
    rule: &'a [(f64, f64)],
    depth: usize,
    keep: &'a [usize],
    seed: u64,
    opts: &'a TreeOptions,
}

impl LaplaceWalker<'_> {
    fn expand(&self, level: usize, parent: &DiscreteField, weight: f64, id: u64, tally: &mut Tally) -> Result<()> {
        let d1 = self.ctx.field().noise_dim();
        let stops: Vec<f64> = self.rule.iter().map(|r| r.0).collect();
        let horizon = *stops.last().expect("non-empty rule");
        let policy = self.opts.laplace_policy(stops[0], horizon);
        let stats = evolve_with_stops(self.ctx, parent, &stops, &policy, |i, u| {
            let w = weight * self.rule[i].1;
            let (channels, energy) = channels_and_energy(self.ctx, u);
            let prods: Vec<f64> = self.adjoint.iter().zip(&energy.values).map(|(a, b)| a * b).collect();
            tally.u[level - 1] += w * pairwise_sum(&prods);
            if level < self.depth {
                let node = mix(id, i as u64 + 1);
                let scale = d1 as f64 / self.keep[level - 1] as f64;
                for k in choose(self.seed, node, self.keep[level - 1], d1) {
                    self.expand(level + 1, &channels[k], w * scale, mix(node, 1000 + k as u64), tally)?;
                }
            }
            Ok(())
        })?;
        tally.evolutions += 1;
        tally.leak = tally.leak.max(stats.leak_ratio);
        Ok(())
    }
}

/// The Laplace-weighted criterion for `n = 1..depth` at `x₀`.
///
/// Every gap uses the configured half-line rule; the outermost time
/// integral is one adjoint resolvent solve.
pub fn laplace_series(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    nu: f64,
    depth: usize,
    opts: &TreeOptions,
) -> Result<LaplaceSeries> {
    opts.validate()?;
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument("ν must be positive".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument("Laplace depth must be ≥ 1".into()));
    }
    let grid = ctx.grid();
    if !grid.in_inner_half_box(x0) {
        return Err(Error::InvalidArgument(format!("anchor {x0:?} outside the inner half-box")));
    }
    let t_max = -opts.tail_tol.ln() / nu;
    let full = opts.laplace_rule.nodes(opts.laplace_nodes, nu);
    let rule: Vec<(f64, f64)> = full.iter().copied().filter(|r| r.0 <= t_max).collect();
    if rule.is_empty() {
        return Err(Error::InvalidArgument("no Laguerre node inside the truncation horizon".into()));
    }
    let mut w = DiscreteField::zeros(grid);
    for (i, c) in grid.interpolation_weights(x0) {
        w.values[i] += c;
    }
    let (adjoint, _) = resolvent_solve_with(ctx, Complex64::new(nu, 0.0), &w, true, DEFAULT_TOL)?;
    let adjoint = adjoint.real_part().values;

    let d1 = ctx.field().noise_dim();
    let keep = keep_counts(d1, depth, opts.index_budget);
    let sampled = keep.iter().any(|&k| k < d1);
    let replicates = if sampled { opts.replicates } else { 1 };
    let runs: Vec<Tally> = (0..replicates)
        .map(|r| {
            let walker = LaplaceWalker {
                ctx,
                adjoint: &adjoint,
                rule: &rule,
                depth,
                keep: &keep,
                seed: mix(opts.seed, r as u64),
                opts,
            };
            let mut tally = Tally::new(depth);
            walker.expand(1, f, 1.0, 0, &mut tally)?;
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let n_runs = runs.len() as f64;
    let values: Vec<f64> = (0..depth).map(|m| runs.iter().map(|r| r.u[m]).sum::<f64>() / n_runs).collect();
    let index_error = (0..depth)
        .map(|m| {
            if runs.len() < 2 {
                return 0.0;
            }
            let var = runs.iter().map(|r| (r.u[m] - values[m]).powi(2)).sum::<f64>() / (n_runs - 1.0);
            (var / n_runs).sqrt()
        })
        .collect();
    let leak_ratio = runs.iter().map(|r| r.leak).fold(0.0, f64::max);
    ctx.record_leak(leak_ratio);
    Ok(LaplaceSeries {
        nu,
        x0: x0.to_vec(),
        values,
        index_error,
        t_max,
        dropped_nodes: full.len() - rule.len(),
        sampled,
        evolutions: runs.iter().map(|r| r.evolutions).sum(),
        leak_ratio,
    })
}
