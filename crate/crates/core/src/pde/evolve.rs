use super::grid::DiscreteField;
use super::operator::OperatorContext;
use super::solver::{solve_real, Shifted, DEFAULT_TOL};
use crate::error::{Error, Result};

/// Time-stepping policy: `dt(t) = min(dt_max, dt0 + growth · t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepPolicy {
    pub dt0: f64,
    pub dt_max: f64,
    pub growth: f64,
    pub tol: f64,
    /// Evolve under `Lᵀ` instead of `L`.
    pub transpose: bool,
}

impl StepPolicy {
    pub fn fixed(dt: f64) -> Self {
        Self { dt0: dt, dt_max: dt, growth: 0.0, tol: DEFAULT_TOL, transpose: false }
    }

    pub fn transposed(mut self) -> Self {
        self.transpose = true;
        self
    }

    fn target(&self, t: f64) -> f64 {
        (self.dt0 + self.growth * t).min(self.dt_max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolveStats {
    pub steps: usize,
    pub solver_iterations: usize,
    /// Largest `max|u| on the boundary-adjacent layer / max|f|` seen at a stop.
    pub leak_ratio: f64,
}

/// Evolve `f` under `∂_t u = L u` (or `Lᵀ`) and call `on_stop(i, u)` at each
/// time in `stops` (sorted, non-decreasing, ≥ 0).
///
/// Crank–Nicolson with Rannacher startup: the first step is replaced by two
/// implicit-Euler half steps.
pub fn evolve_with_stops(
    ctx: &OperatorContext,
    f: &DiscreteField,
    stops: &[f64],
    policy: &StepPolicy,
    mut on_stop: impl FnMut(usize, &DiscreteField) -> Result<()>,
) -> Result<EvolveStats> {
    if stops.windows(2).any(|w| w[1] < w[0]) || stops.first().is_some_and(|&s| s < 0.0) {
        return Err(Error::InvalidArgument("stop times must be sorted and non-negative".into()));
    }
    if !(policy.dt0 > 0.0 && policy.dt_max > 0.0) {
        return Err(Error::InvalidArgument("time steps must be positive".into()));
    }
    let grid = ctx.grid();
    let mut u = f.clone();
    for p in 0..grid.len() {
        if grid.is_boundary(p) {
            u.values[p] = 0.0;
        }
    }
    let fmax = f.max_abs();
    let mut stats = EvolveStats::default();
    let check = |u: &DiscreteField, stats: &mut EvolveStats| {
        if fmax > 0.0 {
            let ratio = u.boundary_layer_max() / fmax;
            stats.leak_ratio = stats.leak_ratio.max(ratio);
        }
    };

    let n = grid.len();
    let mut rhs = vec![0.0; n];
    let mut lu = vec![0.0; n];
    let mut next = u.values.clone();
    let mut t = 0.0;
    let mut started = false;
    // Shifted systems are cached per step size.
    let mut cache: Vec<(f64, Shifted<'_, f64>)> = Vec::new();

    for (i, &stop) in stops.iter().enumerate() {
        while stop - t > 1e-14 * stop.max(1.0) {
            let remaining = stop - t;
            let target = policy.target(t);
            let dt = if remaining <= target {
                remaining
            } else {
                let pieces = (remaining / target).ceil();
                if pieces <= 2.0 {
                    remaining / pieces
                } else {
                    target
                }
            };
            if !started {
                // two implicit-Euler half steps
                let k = system_index(ctx, 0.5 * dt, &mut cache, policy.transpose);
                for _ in 0..2 {
                    rhs.copy_from_slice(&u.values);
                    next.copy_from_slice(&u.values);
                    let s = solve_real(&mut cache[k].1, &rhs, &mut next, policy.tol)?;
                    stats.solver_iterations += s.iterations;
                    u.values.copy_from_slice(&next);
                }
                started = true;
            } else {
                ctx.apply_into(&u.values, &mut lu, policy.transpose);
                for j in 0..n {
                    rhs[j] = u.values[j] + 0.5 * dt * lu[j];
                }
                let k = system_index(ctx, 0.5 * dt, &mut cache, policy.transpose);
                next.copy_from_slice(&u.values);
                let s = solve_real(&mut cache[k].1, &rhs, &mut next, policy.tol)?;
                stats.solver_iterations += s.iterations;
                u.values.copy_from_slice(&next);
            }
            stats.steps += 1;
            t += dt;
        }
        t = stop;
        check(&u, &mut stats);
        on_stop(i, &u)?;
    }
    ctx.record_leak(stats.leak_ratio);
    Ok(stats)
}

fn system_index<'a>(ctx: &'a OperatorContext, dt: f64, cache: &mut Vec<(f64, Shifted<'a, f64>)>, transpose: bool) -> usize {
    if let Some(i) = cache.iter().position(|(h, _)| *h == dt) {
        return i;
    }
    if cache.len() > 8 {
        cache.remove(0);
    }
    cache.push((dt, Shifted::new(ctx, 1.0, dt, transpose)));
    cache.len() - 1
}

/// `T_t f` by Crank–Nicolson with step `dt`.
pub fn evolve_semigroup(ctx: &OperatorContext, f: &DiscreteField, t: f64, dt: f64) -> Result<DiscreteField> {
    if t < 0.0 {
        return Err(Error::InvalidArgument("t must be ≥ 0".into()));
    }
    let mut out = None;
    evolve_with_stops(ctx, f, &[t], &StepPolicy::fixed(dt), |_, u| {
        out = Some(u.clone());
        Ok(())
    })?;
    Ok(out.expect("one stop"))
}
