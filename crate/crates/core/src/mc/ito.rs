//! Iterated Itô integrals against chaos kernels and pathwise chaos sums.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::WienerPath;
use super::sde::SdePath;
use crate::chaos::ChaosKernel;
use crate::error::{Error, Result};
use crate::pde::{evolve_with_stops, sigma_channels, DiscreteField, OperatorContext, PointProbe, ProbeOptions, StepPolicy};
use crate::quad::pairwise_sum;

/// Fewest steps over `[0, t]` accepted by the discretized integrals.
pub const MIN_STEPS: usize = 256;

/// Cap on stored kernel values, `d1^m n^m` summed over orders.
pub const TABLE_CAP: usize = 1 << 26;

/// A deterministic function of ordered times `t > t_1 > ⋯ > t_m ≥ 0`.
pub trait TimeKernel: Sync {
    fn multi_index(&self) -> &[usize];
    fn value(&self, t: f64, times: &[f64]) -> Result<f64>;
}

impl TimeKernel for ChaosKernel<'_> {
    fn multi_index(&self) -> &[usize] {
        ChaosKernel::multi_index(self)
    }
    fn value(&self, t: f64, times: &[f64]) -> Result<f64> {
        self.eval_closed(t, times)
    }
}

/// A kernel given by a closure.
pub struct FnKernel<F> {
    pub multi_index: Vec<usize>,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> TimeKernel for FnKernel<F> {
    fn multi_index(&self) -> &[usize] {
        &self.multi_index
    }
    fn value(&self, _t: f64, times: &[f64]) -> Result<f64> {
        Ok((self.f)(times))
    }
}

/// Number of path steps in `[0, t]`; `t` must sit on the path grid.
fn steps_to(path: &WienerPath, t: f64) -> Result<usize> {
    let n = (t / path.dt()).round() as usize;
    if !(t > 0.0) || t > path.horizon() * (1.0 + 1e-12) || (n as f64 * path.dt() - t).abs() > 1e-9 * t {
        return Err(Error::InvalidArgument(format!("t = {t} is not a grid time of the path")));
    }
    Ok(n)
}

/// Increments `dw[j * d1 + k]` over `n` equal cells of `[0, t]`.
fn coarse_increments(path: &WienerPath, t: f64, n: usize) -> Result<Vec<f64>> {
    let fine = steps_to(path, t)?;
    if fine % n != 0 {
        return Err(Error::InvalidArgument(format!("{n} cells do not divide the {fine} path steps")));
    }
    let stride = fine / n;
    let d1 = path.noise_dim();
    let mut dw = vec![0.0; n * d1];
    for j in 0..n {
        let (a, b) = (path.at(j * stride), path.at((j + 1) * stride));
        for k in 0..d1 {
            dw[j * d1 + k] = b[k] - a[k];
        }
    }
    Ok(dw)
}

/// `Σ_{j_1 > ⋯ > j_m} K(j_1, …, j_m) Δw^{k_1}_{j_1} ⋯ Δw^{k_m}_{j_m}`, innermost sum first.
fn nested_sum(
    kernel: &mut dyn FnMut(&[usize]) -> Result<f64>,
    dw: &[f64],
    d1: usize,
    ks: &[usize],
    idx: &mut Vec<usize>,
    bound: usize,
) -> Result<f64> {
    let level = idx.len();
    let mut parts = Vec::with_capacity(bound);
    for j in 0..bound {
        idx.push(j);
        let inner = if level + 1 == ks.len() { kernel(idx)? } else { nested_sum(kernel, dw, d1, ks, idx, j)? };
        idx.pop();
        parts.push(inner * dw[j * d1 + ks[level]]);
    }
    Ok(pairwise_sum(&parts))
}

/// Left-point discretization of `∫_0^t dw^{k_1}_{t_1} ∫_0^{t_1} ⋯ ∫_0^{t_{m−1}} K dw^{k_m}_{t_m}`
/// on the path grid.
pub fn iterated_ito_integral(kernel: &dyn TimeKernel, path: &WienerPath, t: f64) -> Result<f64> {
    let ks = kernel.multi_index();
    if ks.is_empty() {
        return kernel.value(t, &[]);
    }
    if let Some(&k) = ks.iter().find(|&&k| k >= path.noise_dim()) {
        return Err(Error::InvalidArgument(format!("noise index {k} ≥ d1 = {}", path.noise_dim())));
    }
    let n = steps_to(path, t)?;
    if n < MIN_STEPS {
        return Err(Error::InvalidArgument(format!("{n} steps on [0, t]; need at least {MIN_STEPS}")));
    }
    let dw = coarse_increments(path, t, n)?;
    let dt = t / n as f64;
    let mut times = vec![0.0; ks.len()];
    let mut eval = |idx: &[usize]| {
        for (s, &j) in times.iter_mut().zip(idx) {
            *s = j as f64 * dt;
        }
        kernel.value(t, &times)
    };
    nested_sum(&mut eval, &dw, path.noise_dim(), ks, &mut Vec::new(), n)
}

/// Chaos kernels of all orders `m ≤ M` and multi-indices, tabulated at the
/// left points `t_j = j t / n` of a uniform grid on `[0, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosTable {
    pub t: f64,
    pub x0: Vec<f64>,
    pub order: usize,
    pub nodes: usize,
    pub d1: usize,
    /// `T_t f(x₀)`.
    pub mean: f64,
    /// `tables[m−1][κ][((j_1 n + j_2) n + ⋯) + j_m]` with `κ` the base-`d1` multi-index.
    tables: Vec<Vec<Vec<f64>>>,
    pub evolutions: usize,
    pub leak_ratio: f64,
}

struct Entry {
    order: usize,
    kappa: usize,
    flat: usize,
    value: f64,
}

struct TableBuilder<'a> {
    ctx: &'a OperatorContext,
    probe: &'a PointProbe,
    order: usize,
    n: usize,
    dt: f64,
}

impl TableBuilder<'_> {
    fn policy(&self) -> StepPolicy {
        StepPolicy { dt0: 0.25 * self.dt, dt_max: self.dt, growth: 0.5, ..StepPolicy::fixed(self.dt) }
    }

    /// Evolves `g` from time index `from` down to every `j < from`, recording
    /// `T_{t_j} Q^k_{t_from − t_j} g (x₀)` at the given order.
    fn expand(&self, g: &DiscreteField, from: usize, level: usize, kappa: usize, flat: usize) -> Result<(Vec<Entry>, usize, f64)> {
        let mut out = Vec::new();
        let mut evolutions = 1;
        let mut leak: f64 = 0.0;
        let stops: Vec<f64> = (1..=from).map(|i| i as f64 * self.dt).collect();
        let d1 = self.ctx.field().noise_dim();
        let stats = evolve_with_stops(self.ctx, g, &stops, &self.policy(), |i, u| {
            let j = from - 1 - i;
            let channels = sigma_channels(self.ctx, u);
            let refs: Vec<&DiscreteField> = channels.iter().collect();
            let values = self.probe.values(j as f64 * self.dt, &refs)?;
            for (k, v) in values.into_iter().enumerate() {
                out.push(Entry { order: level, kappa: kappa * d1 + k, flat: flat * self.n + j, value: v });
            }
            if level < self.order && j > 0 {
                let deeper: Vec<_> = channels
                    .par_iter()
                    .enumerate()
                    .map(|(k, c)| self.expand(c, j, level + 1, kappa * d1 + k, flat * self.n + j))
                    .collect::<Result<_>>()?;
                for (entries, ev, lk) in deeper {
                    out.extend(entries);
                    evolutions += ev;
                    leak = leak.max(lk);
                }
            }
            Ok(())
        })?;
        Ok((out, evolutions, leak.max(stats.leak_ratio)))
    }
}

impl ChaosTable {
    /// Tabulates all kernels of order `1..=order` on `nodes` left points.
    ///
    /// Costs `1 + n d1 + n² d1²/2 + ⋯` semigroup evolutions.
    pub fn build(
        ctx: &OperatorContext,
        f: &DiscreteField,
        x0: &[f64],
        t: f64,
        order: usize,
        nodes: usize,
    ) -> Result<Self> {
        if !(t > 0.0) || nodes == 0 {
            return Err(Error::InvalidArgument("kernel table needs t > 0 and at least one node".into()));
        }
        let d1 = ctx.field().noise_dim();
        let size: f64 = (1..=order).map(|m| (d1 as f64 * nodes as f64).powi(m as i32)).sum();
        if size > TABLE_CAP as f64 {
            return Err(Error::Budget(format!("kernel table of {size:e} values exceeds {TABLE_CAP}")));
        }
        let dt = t / nodes as f64;
        let extra: Vec<f64> = (1..nodes).map(|j| j as f64 * dt).collect();
        let probe = PointProbe::build(ctx, x0, t, &extra, &ProbeOptions::default())?;
        let mean = probe.value(t, f)?;
        let mut tables: Vec<Vec<Vec<f64>>> =
            (1..=order).map(|m| vec![vec![0.0; nodes.pow(m as u32)]; d1.pow(m as u32)]).collect();
        let (entries, evolutions, leak) = if order == 0 {
            (Vec::new(), 0, probe.leak_ratio())
        } else {
            let b = TableBuilder { ctx, probe: &probe, order, n: nodes, dt };
            b.expand(f, nodes, 1, 0, 0)?
        };
        for e in entries {
            tables[e.order - 1][e.kappa][e.flat] = e.value;
        }
        Ok(Self {
            t,
            x0: x0.to_vec(),
            order,
            nodes,
            d1,
            mean,
            tables,
            evolutions,
            leak_ratio: leak.max(probe.leak_ratio()),
        })
    }

    /// Kernel value at grid indices `j_1 > ⋯ > j_m` for multi-index `ks`.
    pub fn kernel(&self, ks: &[usize], js: &[usize]) -> f64 {
        let kappa = ks.iter().fold(0, |a, &k| a * self.d1 + k);
        let flat = js.iter().fold(0, |a, &j| a * self.nodes + j);
        self.tables[ks.len() - 1][kappa][flat]
    }

    /// The chaos levels `I_1..I_M` of one path: `I_m` sums the order-`m`
    /// iterated integrals over all multi-indices.
    pub fn levels(&self, path: &WienerPath, order: usize) -> Result<Vec<f64>> {
        if order > self.order {
            return Err(Error::InvalidArgument(format!("table holds orders up to {}", self.order)));
        }
        if path.noise_dim() != self.d1 {
            return Err(Error::InvalidArgument("path and table noise dimensions differ".into()));
        }
        let dw = coarse_increments(path, self.t, self.nodes)?;
        let mut out = Vec::with_capacity(order);
        for m in 1..=order {
            let table = &self.tables[m - 1];
            let mut parts = Vec::with_capacity(table.len());
            for (kappa, values) in table.iter().enumerate() {
                let mut ks = vec![0; m];
                let mut r = kappa;
                for slot in ks.iter_mut().rev() {
                    *slot = r % self.d1;
                    r /= self.d1;
                }
                let mut lookup = |idx: &[usize]| Ok(values[idx.iter().fold(0, |a, &j| a * self.nodes + j)]);
                parts.push(nested_sum(&mut lookup, &dw, self.d1, &ks, &mut Vec::new(), self.nodes)?);
            }
            out.push(pairwise_sum(&parts));
        }
        Ok(out)
    }

    /// `T_t f(x₀) + Σ_{m ≤ M} I_m`.
    pub fn reconstruct(&self, path: &WienerPath, order: usize) -> Result<f64> {
        let levels = self.levels(path, order)?;
        Ok(self.mean + pairwise_sum(&levels))
    }
}

/// Truncated chaos expansion of `f(x_t)` along one Wiener path.
///
/// Builds the kernel table on `path`'s own grid over `[0, t]`; for
/// ensembles build one [`ChaosTable`] and call [`ChaosTable::reconstruct`].
pub fn chaos_reconstruct(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    path: &WienerPath,
    t: f64,
    order: usize,
) -> Result<f64> {
    let n = steps_to(path, t)?;
    if order > 0 && n < MIN_STEPS {
        return Err(Error::InvalidArgument(format!("{n} steps on [0, t]; need at least {MIN_STEPS}")));
    }
    ChaosTable::build(ctx, f, x0, t, order, n)?.reconstruct(path, order)
}

/// `E(f(x_t) | F^w_t)` through order `M`: the same series as
/// [`chaos_reconstruct`], named for use where `f(x_t)` need not be
/// measurable with respect to the noise.
pub fn conditional_series_estimate(
    ctx: &OperatorContext,
    f: &DiscreteField,
    x0: &[f64],
    path: &WienerPath,
    t: f64,
    order: usize,
) -> Result<f64> {
    chaos_reconstruct(ctx, f, x0, path, t, order)
}

/// The channel fields `σ^k·∇T_{t−t_j} f` at the left points `t_j = j t/n`,
/// for evaluation along Euler paths.
#[derive(Clone, Debug)]
pub struct GradientLadder {
    pub t: f64,
    pub nodes: usize,
    /// `T_t f(x₀)` from the evolved field.
    pub mean: f64,
    channels: Vec<Vec<DiscreteField>>,
    pub leak_ratio: f64,
}

impl GradientLadder {
    pub fn build(ctx: &OperatorContext, f: &DiscreteField, x0: &[f64], t: f64, nodes: usize) -> Result<Self> {
        if !(t > 0.0) || nodes == 0 {
            return Err(Error::InvalidArgument("gradient ladder needs t > 0 and at least one node".into()));
        }
        let dt = t / nodes as f64;
        let stops: Vec<f64> = (1..=nodes).map(|i| i as f64 * dt).collect();
        let policy = StepPolicy { dt0: 0.25 * dt, dt_max: dt, growth: 0.5, ..StepPolicy::fixed(dt) };
        let mut channels = vec![Vec::new(); nodes];
        let mut mean = 0.0;
        let stats = evolve_with_stops(ctx, f, &stops, &policy, |i, u| {
            let j = nodes - 1 - i;
            channels[j] = sigma_channels(ctx, u);
            if j == 0 {
                mean = u.interpolate(x0);
            }
            Ok(())
        })?;
        Ok(Self { t, nodes, mean, channels, leak_ratio: stats.leak_ratio })
    }

    fn stride(&self, x: &SdePath) -> Result<usize> {
        let fine = (self.t / x.dt).round() as usize;
        if fine % self.nodes != 0 || fine > x.steps() || (fine as f64 * x.dt - self.t).abs() > 1e-9 * self.t {
            return Err(Error::InvalidArgument("path grid does not contain the ladder grid".into()));
        }
        Ok(fine / self.nodes)
    }

    /// `Σ_j Σ_k (σ^k·∇T_{t−t_j} f)(x_{t_j}) Δw^k_j`: the stochastic integral of the
    /// martingale representation along the same path.
    pub fn martingale(&self, w: &WienerPath, x: &SdePath) -> Result<f64> {
        let stride = self.stride(x)?;
        let parts: Vec<f64> = (0..self.nodes)
            .map(|j| {
                let (a, b) = (w.at(j * stride), w.at((j + 1) * stride));
                let y = x.state(j * stride);
                self.channels[j].iter().enumerate().map(|(k, c)| c.interpolate(y) * (b[k] - a[k])).sum()
            })
            .collect();
        Ok(pairwise_sum(&parts))
    }

    /// `Σ_j Σ_k (σ^k·∇T_{t−t_j} f)²(x_{t_j}) Δt`.
    pub fn energy(&self, x: &SdePath) -> Result<f64> {
        let stride = self.stride(x)?;
        let dt = self.t / self.nodes as f64;
        let parts: Vec<f64> = (0..self.nodes)
            .map(|j| {
                let y = x.state(j * stride);
                self.channels[j].iter().map(|c| c.interpolate(y).powi(2)).sum::<f64>() * dt
            })
            .collect();
        Ok(pairwise_sum(&parts))
    }
}
