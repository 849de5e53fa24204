use super::evolve::{evolve_with_stops, StepPolicy};
use super::gradient::gradient;
use super::grid::DiscreteField;
use super::operator::OperatorContext;
use crate::error::{Error, Result};
use crate::quad::pairwise_sum;

/// Default ladder ratio `2^{1/4}`.
pub const LADDER_RATIO: f64 = 1.189_207_115_002_721;

/// Snapshots `T_{t_j} f` on a geometric ladder `t_j = t_min ρ^j` plus `t = 0`,
/// with their gradients. Reads interpolate linearly in `√t`.
#[derive(Clone, Debug)]
pub struct SemigroupCache {
    times: Vec<f64>,
    snapshots: Vec<DiscreteField>,
    gradients: Vec<Vec<DiscreteField>>,
}

impl SemigroupCache {
    pub fn build(ctx: &OperatorContext, f: &DiscreteField, t_min: f64, t_max: f64, ratio: f64, dt_max: f64) -> Result<Self> {
        if !(t_min > 0.0 && t_max >= t_min && ratio > 1.0) {
            return Err(Error::InvalidArgument("ladder needs 0 < t_min ≤ t_max and ratio > 1".into()));
        }
        let mut times = vec![0.0];
        let mut t = t_min;
        loop {
            times.push(t.min(t_max));
            if t >= t_max {
                break;
            }
            t *= ratio;
        }
        let policy = StepPolicy { dt0: 0.25 * t_min, dt_max, growth: 0.1, ..StepPolicy::fixed(dt_max) };
        let mut snapshots = Vec::with_capacity(times.len());
        evolve_with_stops(ctx, f, &times, &policy, |_, u| {
            snapshots.push(u.clone());
            Ok(())
        })?;
        let gradients = snapshots.iter().map(gradient).collect();
        Ok(Self { times, snapshots, gradients })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let last = *self.times.last().expect("non-empty ladder");
        if !(0.0..=last * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} outside cached range [0, {last}]")));
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (a, b) = (self.times[j - 1].sqrt(), self.times[j].sqrt());
        let w = ((t.min(last).sqrt() - a) / (b - a)).clamp(0.0, 1.0);
        Ok((j, w))
    }

    fn blend(lo: &DiscreteField, hi: &DiscreteField, w: f64) -> DiscreteField {
        let values = lo.values.iter().zip(&hi.values).map(|(a, b)| (1.0 - w) * a + w * b).collect();
        DiscreteField { grid: lo.grid.clone(), values }
    }

    pub fn snapshot_at(&self, t: f64) -> Result<DiscreteField> {
        let (j, w) = self.bracket(t)?;
        Ok(Self::blend(&self.snapshots[j - 1], &self.snapshots[j], w))
    }

    pub fn gradient_at(&self, t: f64) -> Result<Vec<DiscreteField>> {
        let (j, w) = self.bracket(t)?;
        Ok(self.gradients[j - 1].iter().zip(&self.gradients[j]).map(|(a, b)| Self::blend(a, b, w)).collect())
    }
}

/// Adjoint point evaluator: `(T_τ g)(x₀) = ⟨p_τ, g⟩` with `p_τ = e^{τLᵀ} w_{x₀}`.
///
/// Snapshots of `p_τ` are kept at `τ = 0`, on a geometric ladder and at any
/// requested extra times. Values between snapshots use cubic Lagrange
/// interpolation in `ln τ` (linear in `τ` below the first positive snapshot).
#[derive(Clone, Debug)]
pub struct PointProbe {
    x0: Vec<f64>,
    times: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
    leak_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptions {
    pub ratio: f64,
    /// Smallest positive ladder time as a fraction of `t_max`.
    pub tau_min_fraction: f64,
    pub dt_max: f64,
    /// Step growth rate of the adjoint evolution.
    pub growth: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { ratio: LADDER_RATIO, tau_min_fraction: 2f64.powi(-14), dt_max: 0.01, growth: 0.08 }
    }
}

impl PointProbe {
    pub fn build(ctx: &OperatorContext, x0: &[f64], t_max: f64, extra: &[f64], opts: &ProbeOptions) -> Result<Self> {
        let grid = ctx.grid();
        if x0.len() != grid.dim() {
            return Err(Error::InvalidArgument("probe point has wrong dimension".into()));
        }
        if !grid.in_inner_half_box(x0) {
            return Err(Error::InvalidArgument(format!("probe point {x0:?} outside the inner half-box")));
        }
        if !(t_max > 0.0) {
            return Err(Error::InvalidArgument("probe horizon must be positive".into()));
        }
        let tau_min = t_max * opts.tau_min_fraction;
        let mut times = vec![0.0];
        let mut t = tau_min;
        while t < t_max {
            times.push(t);
            t *= opts.ratio;
        }
        times.push(t_max);
        times.extend(extra.iter().copied().filter(|&s| s > 0.0 && s <= t_max));
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1e-300));

        let mut w = DiscreteField::zeros(grid);
        for (i, c) in grid.interpolation_weights(x0) {
            w.values[i] += c;
        }
        let policy = StepPolicy { dt0: 0.25 * tau_min, dt_max: opts.dt_max, growth: opts.growth, ..StepPolicy::fixed(1.0) }
            .transposed();
        let mut snapshots = Vec::with_capacity(times.len());
        let stats = evolve_with_stops(ctx, &w, &times, &policy, |_, u| {
            snapshots.push(u.values.clone());
            Ok(())
        })?;
        Ok(Self { x0: x0.to_vec(), times, snapshots, leak_ratio: stats.leak_ratio })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }
    /// Boundary-layer ratio of the adjoint evolution.
    pub fn leak_ratio(&self) -> f64 {
        self.leak_ratio
    }

    fn dot(&self, j: usize, g: &[f64]) -> f64 {
        let p = &self.snapshots[j];
        let prods: Vec<f64> = p.iter().zip(g).map(|(a, b)| a * b).collect();
        pairwise_sum(&prods)
    }

    /// Weights `(snapshot, coefficient)` such that `⟨p_τ, g⟩ ≈ Σ c ⟨p_j, g⟩`.
    pub fn weights(&self, tau: f64) -> Result<Vec<(usize, f64)>> {
        let last = self.t_max();
        if !(0.0..=last * (1.0 + 1e-12)).contains(&tau) {
            return Err(Error::InvalidArgument(format!("τ = {tau} outside probe range [0, {last}]")));
        }
        let tau = tau.min(last);
        let j = self.times.partition_point(|&s| s < tau);
        if j < self.times.len() && (self.times[j] - tau).abs() <= 1e-12 * tau.max(1e-300) {
            return Ok(vec![(j, 1.0)]);
        }
        if tau == 0.0 {
            return Ok(vec![(0, 1.0)]);
        }
        // self.times[j-1] < tau < self.times[j]
        if j <= 1 {
            let w = tau / self.times[1];
            return Ok(vec![(0, 1.0 - w), (1, w)]);
        }
        let m = self.times.len();
        if m < 5 {
            let w = (tau - self.times[j - 1]) / (self.times[j] - self.times[j - 1]);
            return Ok(vec![(j - 1, 1.0 - w), (j, w)]);
        }
        let lo = (j as isize - 2).max(1) as usize;
        let lo = lo.min(m - 4);
        let nodes: Vec<usize> = (lo..lo + 4).collect();
        let s = tau.ln();
        let xs: Vec<f64> = nodes.iter().map(|&i| self.times[i].ln()).collect();
        let mut out = Vec::with_capacity(4);
        for (a, &ia) in nodes.iter().enumerate() {
            let mut c = 1.0;
            for (b, _) in nodes.iter().enumerate() {
                if a != b {
                    c *= (s - xs[b]) / (xs[a] - xs[b]);
                }
            }
            out.push((ia, c));
        }
        Ok(out)
    }

    /// `(T_τ g)(x₀)`.
    pub fn value(&self, tau: f64, g: &DiscreteField) -> Result<f64> {
        Ok(self.weights(tau)?.iter().map(|&(j, c)| c * self.dot(j, &g.values)).sum())
    }

    /// Values for several fields at the same `τ`, sharing the weights.
    pub fn values(&self, tau: f64, gs: &[&DiscreteField]) -> Result<Vec<f64>> {
        let w = self.weights(tau)?;
        Ok(gs.iter().map(|g| w.iter().map(|&(j, c)| c * self.dot(j, &g.values)).sum()).collect())
    }
}
