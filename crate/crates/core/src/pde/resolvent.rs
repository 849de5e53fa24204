use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{ComplexField, DiscreteField};
use super::operator::OperatorContext;
use super::solver::{bicgstab, solve_real, Shifted, SolveStats, DEFAULT_TOL};
use crate::error::{Error, Result};

/// Solve `(λ − L) u = f` (or with `Lᵀ`) to relative residual `tol`.
pub fn resolvent_solve_with(
    ctx: &OperatorContext,
    lambda: Complex64,
    f: &DiscreteField,
    transpose: bool,
    tol: f64,
) -> Result<(ComplexField, SolveStats)> {
    let grid = ctx.grid();
    if lambda.im == 0.0 {
        let mut sys = Shifted::new(ctx, lambda.re, 1.0, transpose);
        let mut x = vec![0.0; grid.len()];
        let stats = solve_real(&mut sys, &f.values, &mut x, tol)?;
        let values = x.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        return Ok((ComplexField { grid: grid.clone(), values }, stats));
    }
    let mut sys = Shifted::new(ctx, lambda, Complex64::new(1.0, 0.0), transpose);
    let rhs: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut x = vec![Complex64::default(); grid.len()];
    let stats = bicgstab(&mut sys, &rhs, &mut x, tol)?;
    Ok((ComplexField { grid: grid.clone(), values: x }, stats))
}

/// `R_λ f = (λ − L)^{-1} f`.
pub fn resolvent_solve(ctx: &OperatorContext, lambda: Complex64, f: &DiscreteField) -> Result<ComplexField> {
    Ok(resolvent_solve_with(ctx, lambda, f, false, DEFAULT_TOL)?.0)
}

/// Quadrature nodes `ζ_j` and weights `ω_j` for unit time:
/// `T_t f ≈ Σ_j ω_j e^{ζ_j} R_{ζ_j / t} f / t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourTable {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

impl ContourTable {
    /// Parabolic contour `ζ(θ) = N(0.1309 − 0.1194 θ² + 0.25 i θ)` with the
    /// midpoint rule on `[−π, π]`.
    pub fn parabolic(n: usize) -> Self {
        use std::f64::consts::PI;
        let nf = n as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            let th = -PI + (j as f64 + 0.5) * 2.0 * PI / nf;
            let z = Complex64::new(nf * (0.1309 - 0.1194 * th * th), nf * 0.25 * th);
            let dz = Complex64::new(-nf * 0.2388 * th, nf * 0.25);
            nodes.push(z);
            weights.push(dz / Complex64::new(0.0, nf));
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Default number of contour nodes.
pub const DEFAULT_CONTOUR_NODES: usize = 32;

/// Relative bound on the discarded imaginary part.
pub const IMAGINARY_TOLERANCE: f64 = 1e-6;

/// `T_t f` from resolvents on a contour.
pub fn contour_semigroup(ctx: &OperatorContext, f: &DiscreteField, t: f64, table: &ContourTable) -> Result<DiscreteField> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("contour semigroup needs t > 0".into()));
    }
    let grid = ctx.grid();
    let mut acc = vec![Complex64::default(); grid.len()];
    for (&z, &w) in table.nodes.iter().zip(&table.weights) {
        let (u, _) = resolvent_solve_with(ctx, z / t, f, false, DEFAULT_TOL)?;
        let c = w * z.exp() / t;
        for (a, v) in acc.iter_mut().zip(&u.values) {
            *a += c * v;
        }
    }
    let out = ComplexField { grid: grid.clone(), values: acc };
    let fmax = f.max_abs();
    let residue = out.imag_max();
    let threshold = IMAGINARY_TOLERANCE * fmax;
    if residue > threshold {
        return Err(Error::ImaginaryResidue { residue, threshold });
    }
    Ok(out.real_part())
}
