use super::cache::SemigroupCache;
use super::evolve::evolve_semigroup;
use super::grid::DiscreteField;
use super::operator::OperatorContext;
use crate::error::{Error, Result};

/// Gradient of a grid function, one component per axis.
///
/// Fourth-order central differences where the stencil fits, second-order
/// central on the next layer, and one-sided second-order on the boundary.
pub fn gradient(f: &DiscreteField) -> Vec<DiscreteField> {
    let grid = &f.grid;
    let (d, n, h) = (grid.dim(), grid.n_per_axis(), grid.h());
    let v = &f.values;
    let mut out = vec![DiscreteField::zeros(grid); d];
    let mut idx = vec![0usize; d];
    for p in 0..grid.len() {
        grid.multi_index(p, &mut idx);
        for (axis, comp) in out.iter_mut().enumerate() {
            let s = grid.strides()[axis];
            let i = idx[axis];
            comp.values[p] = if i >= 2 && i + 2 < n {
                (v[p - 2 * s] - 8.0 * v[p - s] + 8.0 * v[p + s] - v[p + 2 * s]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (v[p + s] - v[p - s]) / (2.0 * h)
            } else if i == 0 {
                (-3.0 * v[p] + 4.0 * v[p + s] - v[p + 2 * s]) / (2.0 * h)
            } else {
                (3.0 * v[p] - 4.0 * v[p - s] + v[p - 2 * s]) / (2.0 * h)
            };
        }
    }
    out
}

/// `σ^{ik} D_i g` at every grid point (zero-based `k`).
pub fn sigma_contract(ctx: &OperatorContext, k: usize, grad: &[DiscreteField]) -> DiscreteField {
    let grid = ctx.grid();
    let (d, d1) = (grid.dim(), ctx.field().noise_dim());
    let mut out = DiscreteField::zeros(grid);
    for p in 0..grid.len() {
        let s = ctx.sigma_at(p);
        out.values[p] = (0..d).map(|i| s[i * d1 + k] * grad[i].values[p]).sum();
    }
    out
}

/// All `d1` channels `σ^k · ∇g` from one gradient.
pub fn sigma_channels(ctx: &OperatorContext, g: &DiscreteField) -> Vec<DiscreteField> {
    let grad = gradient(g);
    (0..ctx.field().noise_dim()).map(|k| sigma_contract(ctx, k, &grad)).collect()
}

/// `Σ_k (σ^k · ∇g)² = ∇gᵀ a ∇g` at every grid point.
pub fn energy_density(ctx: &OperatorContext, g: &DiscreteField) -> DiscreteField {
    let grid = ctx.grid();
    let (d, d1) = (grid.dim(), ctx.field().noise_dim());
    let grad = gradient(g);
    let mut out = DiscreteField::zeros(grid);
    for p in 0..grid.len() {
        let s = ctx.sigma_at(p);
        let mut acc = 0.0;
        for k in 0..d1 {
            let c: f64 = (0..d).map(|i| s[i * d1 + k] * grad[i].values[p]).sum();
            acc += c * c;
        }
        out.values[p] = acc;
    }
    out
}

/// `Q_t^k f = σ^{ik} D_i T_t f` (zero-based `k`).
///
/// With a cache, `T_t f` and its gradient are read from the snapshots;
/// otherwise `T_t f` is evolved with step `dt`.
pub fn q_operator(
    ctx: &OperatorContext,
    k: usize,
    t: f64,
    f: &DiscreteField,
    cache: Option<&SemigroupCache>,
    dt: f64,
) -> Result<DiscreteField> {
    if k >= ctx.field().noise_dim() {
        return Err(Error::InvalidArgument(format!("noise index {k} ≥ d1 = {}", ctx.field().noise_dim())));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument("t must be ≥ 0".into()));
    }
    let grad = match cache {
        Some(c) => c.gradient_at(t)?,
        None if t == 0.0 => gradient(f),
        None => gradient(&evolve_semigroup(ctx, f, t, dt)?),
    };
    Ok(sigma_contract(ctx, k, &grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::make_grid;

    #[test]
    fn gradient_exact_on_cubics() {
        let g = make_grid(2, 1.0, 21).unwrap();
        let f = DiscreteField::sample(&g, |x| x[0].powi(3) - 2.0 * x[0] * x[1] + x[1] * x[1]);
        let grad = gradient(&f);
        let mut x = [0.0; 2];
        let mut idx = [0usize; 2];
        for p in 0..g.len() {
            g.point(p, &mut x);
            g.multi_index(p, &mut idx);
            let inner = idx.iter().all(|&i| i >= 2 && i + 2 < 21);
            if inner {
                assert!((grad[0].values[p] - (3.0 * x[0] * x[0] - 2.0 * x[1])).abs() < 1e-11);
                assert!((grad[1].values[p] - (-2.0 * x[0] + 2.0 * x[1])).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn gradient_exact_on_quadratics_everywhere() {
        let g = make_grid(2, 1.0, 17).unwrap();
        let f = DiscreteField::sample(&g, |x| x[0] * x[0] + 3.0 * x[1]);
        let grad = gradient(&f);
        let mut x = [0.0; 2];
        for p in 0..g.len() {
            g.point(p, &mut x);
            assert!((grad[0].values[p] - 2.0 * x[0]).abs() < 1e-12);
            assert!((grad[1].values[p] - 3.0).abs() < 1e-12);
        }
    }
}
