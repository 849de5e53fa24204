use crate::error::{Error, Result};
use crate::pde::{evolve_with_stops, gradient, sigma_contract, DiscreteField, OperatorContext, StepPolicy};

/// Step policy for evolving over one segment of length `s`.
pub(crate) fn segment_policy(s: f64) -> StepPolicy {
    StepPolicy { dt0: s / 512.0, dt_max: s / 48.0, growth: 0.1, ..StepPolicy::fixed(s) }
}

pub(crate) fn evolve_to(ctx: &OperatorContext, f: &DiscreteField, s: f64) -> Result<DiscreteField> {
    if s == 0.0 {
        let mut u = f.clone();
        for p in 0..u.grid.len() {
            if u.grid.is_boundary(p) {
                u.values[p] = 0.0;
            }
        }
        return Ok(u);
    }
    let mut out = None;
    evolve_with_stops(ctx, f, &[s], &segment_policy(s), |_, u| {
        out = Some(u.clone());
        Ok(())
    })?;
    Ok(out.expect("one stop"))
}

/// The order-`m` kernel `T_{t_m} Q^{k_m}_{t_{m−1}−t_m} ⋯ Q^{k_1}_{t−t_1} f(x₀)`
/// for one multi-index (zero-based channels).
#[derive(Clone, Debug)]
pub struct ChaosKernel<'a> {
    ctx: &'a OperatorContext,
    multi_index: Vec<usize>,
    f: DiscreteField,
    x0: Vec<f64>,
}

pub fn chaos_kernel<'a>(
    ctx: &'a OperatorContext,
    m: usize,
    multi_index: &[usize],
    f: &DiscreteField,
    x0: &[f64],
) -> Result<ChaosKernel<'a>> {
    if multi_index.len() != m {
        return Err(Error::InvalidArgument(format!("multi-index of length {} for order {m}", multi_index.len())));
    }
    let d1 = ctx.field().noise_dim();
    if let Some(k) = multi_index.iter().find(|&&k| k >= d1) {
        return Err(Error::InvalidArgument(format!("noise index {k} ≥ d1 = {d1}")));
    }
    if !ctx.grid().in_inner_half_box(x0) {
        return Err(Error::InvalidArgument(format!("anchor {x0:?} outside the inner half-box")));
    }
    Ok(ChaosKernel { ctx, multi_index: multi_index.to_vec(), f: f.clone(), x0: x0.to_vec() })
}

impl ChaosKernel<'_> {
    pub fn order(&self) -> usize {
        self.multi_index.len()
    }

    pub fn multi_index(&self) -> &[usize] {
        &self.multi_index
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Value at `t > t_1 > ⋯ > t_m > 0` (`times = [t_1, …, t_m]`).
    pub fn eval(&self, t: f64, times: &[f64]) -> Result<f64> {
        Ok(self.field_at(t, times)?.interpolate(&self.x0))
    }

    /// The grid function whose value at `x₀` is the kernel.
    pub fn field_at(&self, t: f64, times: &[f64]) -> Result<DiscreteField> {
        self.field_at_inner(t, times, false)
    }

    /// As [`Self::eval`], also accepting `t_m = 0` (left endpoints of Itô sums).
    pub fn eval_closed(&self, t: f64, times: &[f64]) -> Result<f64> {
        Ok(self.field_at_inner(t, times, true)?.interpolate(&self.x0))
    }

    fn field_at_inner(&self, t: f64, times: &[f64], closed: bool) -> Result<DiscreteField> {
        if times.len() != self.order() {
            return Err(Error::InvalidArgument(format!("{} times for order {}", times.len(), self.order())));
        }
        let mut prev = t;
        for &s in times {
            if !(s < prev && (s > 0.0 || closed && s == 0.0)) {
                return Err(Error::SimplexOrder);
            }
            prev = s;
        }
        let mut g = self.f.clone();
        let mut prev = t;
        for (&k, &s) in self.multi_index.iter().zip(times) {
            let u = evolve_to(self.ctx, &g, prev - s)?;
            g = sigma_contract(self.ctx, k, &gradient(&u));
            prev = s;
        }
        evolve_to(self.ctx, &g, prev)
    }
}
