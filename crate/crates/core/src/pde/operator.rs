use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::grid::{DiscreteField, Grid};
use super::spectral::SineBasis;
use crate::error::{Error, Result};
use crate::fields::CoefficientField;

/// Relative boundary-layer magnitude above which an evolution is flagged.
pub const BOUNDARY_LEAK_THRESHOLD: f64 = 1e-6;

/// Assembled generator `L = ½ a^{ij} D_{ij} + b^i D_i` with zero Dirichlet rows.
///
/// Coefficients are stored per interior row; boundary nodes are held at zero.
#[derive(Debug)]
pub struct OperatorContext {
    grid: Arc<Grid>,
    field: CoefficientField,
    lambda_grid: f64,
    offsets: Vec<isize>,
    interior: Vec<usize>,
    coef: Vec<f64>,
    coef_t: Vec<f64>,
    symmetric: bool,
    clamped_points: usize,
    /// `σ` at every grid point, `d × d1` row-major per point.
    sigma_grid: Vec<f64>,
    /// Interior average of `a^{ii}` per axis.
    mean_diffusion: Vec<f64>,
    sine: SineBasis,
    leak_events: AtomicU64,
    max_leak_ratio: AtomicU64,
}

/// Coefficients at one interior point, after the drift clamp.
struct PointStencil {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Two-point Gauss rule per axis on the cell `x + [−h/2, h/2]^d`.
///
/// `a` is averaged over the cell rather than sampled at the node. For smooth
/// fields this changes `a` by `O(h²)`; where `σ` degenerates at an isolated
/// point (a mollified vortex core) it keeps the node from becoming absorbing.
fn cell_rule(d: usize, h: f64) -> Vec<(Vec<f64>, f64)> {
    let g = 0.5 * h / 3f64.sqrt();
    let w = 0.5f64.powi(d as i32);
    (0..1usize << d).map(|m| ((0..d).map(|i| if m >> i & 1 == 1 { g } else { -g }).collect(), w)).collect()
}

impl OperatorContext {
    /// Assemble `L` on `grid`. `lambda_grid = None` selects the default cap `1/h`,
    /// `Some(0.0)` disables the cap.
    pub fn assemble(field: &CoefficientField, grid: &Arc<Grid>, lambda_grid: Option<f64>) -> Result<Self> {
        let d = grid.dim();
        if field.dim() != d {
            return Err(Error::InvalidArgument(format!("field dimension {} ≠ grid dimension {d}", field.dim())));
        }
        let h = grid.h();
        let lambda = lambda_grid.unwrap_or(1.0 / h);
        if lambda < 0.0 {
            return Err(Error::InvalidArgument("λ_grid must be ≥ 0".into()));
        }
        let strides = grid.strides().to_vec();
        let d1 = field.noise_dim();
        let mut sigma_grid = vec![0.0; grid.len() * d * d1];
        {
            let mut x = vec![0.0; d];
            for (p, chunk) in sigma_grid.chunks_mut(d * d1).enumerate() {
                grid.point(p, &mut x);
                field.sigma_into(&x, chunk);
            }
        }
        let interior: Vec<usize> = (0..grid.len()).filter(|&p| !grid.is_boundary(p)).collect();

        let cell = cell_rule(d, h);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut s = vec![0.0; d * d1];
        let mut stencils = Vec::with_capacity(interior.len());
        let mut mixed = false;
        let mut clamped_points = 0;
        for &p in &interior {
            grid.point(p, &mut x);
            let mut a = vec![0.0; d * d];
            for (off, w) in &cell {
                for i in 0..d {
                    y[i] = x[i] + off[i];
                }
                field.sigma_into(&y, &mut s);
                for (ai, v) in a.iter_mut().zip(crate::fields::diffusion_from_sigma(&s, d, d1)) {
                    *ai += w * v;
                }
            }
            let mut b = field.drift(&x);
            if a.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("coefficient at grid point {x:?}")));
            }
            if lambda > 0.0 {
                let mut hit = false;
                for v in b.iter_mut() {
                    if v.abs() > lambda {
                        *v = v.signum() * lambda;
                        hit = true;
                    }
                }
                clamped_points += hit as usize;
            }
            for i in 0..d {
                for j in 0..d {
                    if i != j && a[i * d + j] != 0.0 {
                        mixed = true;
                    }
                }
            }
            stencils.push(PointStencil { a, b });
        }

        // Offsets: center, ±e_i, then (if needed) ±e_i ± e_j for i < j.
        let mut offsets: Vec<isize> = vec![0];
        for s in &strides {
            offsets.push(*s as isize);
            offsets.push(-(*s as isize));
        }
        let mut pairs = Vec::new();
        if mixed {
            for i in 0..d {
                for j in i + 1..d {
                    let (si, sj) = (strides[i] as isize, strides[j] as isize);
                    offsets.extend([si + sj, -si - sj, si - sj, -si + sj]);
                    pairs.push((i, j));
                }
            }
        }
        let n_off = offsets.len();
        let opposite: Vec<usize> =
            offsets.iter().map(|o| offsets.iter().position(|q| *q == -o).expect("symmetric offsets")).collect();

        let h2 = h * h;
        let mut coef = vec![0.0; interior.len() * n_off];
        for (row, st) in stencils.iter().enumerate() {
            let c = &mut coef[row * n_off..(row + 1) * n_off];
            for i in 0..d {
                let aii = st.a[i * d + i];
                c[0] -= aii / h2;
                c[1 + 2 * i] += 0.5 * aii / h2 + st.b[i] / (2.0 * h);
                c[2 + 2 * i] += 0.5 * aii / h2 - st.b[i] / (2.0 * h);
            }
            for (m, &(i, j)) in pairs.iter().enumerate() {
                let q = st.a[i * d + j] / (4.0 * h2);
                let base = 1 + 2 * d + 4 * m;
                c[base] += q;
                c[base + 1] += q;
                c[base + 2] -= q;
                c[base + 3] -= q;
            }
        }

        // Transposed stencil on interior unknowns: (Lᵀ)_{p, p+o} = L_{p+o, p}.
        let mut row_of = vec![usize::MAX; grid.len()];
        for (row, &p) in interior.iter().enumerate() {
            row_of[p] = row;
        }
        let mut coef_t = vec![0.0; coef.len()];
        for (row, &p) in interior.iter().enumerate() {
            for (s, &o) in offsets.iter().enumerate() {
                let q = (p as isize + o) as usize;
                let qrow = row_of[q];
                if qrow != usize::MAX {
                    coef_t[row * n_off + s] = coef[qrow * n_off + opposite[s]];
                }
            }
        }
        let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let symmetric = interior.iter().enumerate().all(|(row, &p)| {
            (0..n_off).all(|s| {
                let q = (p as isize + offsets[s]) as usize;
                if row_of[q] == usize::MAX {
                    return true;
                }
                (coef[row * n_off + s] - coef_t[row * n_off + s]).abs() <= 1e-13 * scale
            })
        });

        let mut mean_diffusion = vec![0.0; d];
        for st in &stencils {
            for (i, m) in mean_diffusion.iter_mut().enumerate() {
                *m += st.a[i * d + i];
            }
        }
        mean_diffusion.iter_mut().for_each(|m| *m /= stencils.len().max(1) as f64);

        Ok(Self {
            grid: grid.clone(),
            field: field.clone(),
            lambda_grid: lambda,
            offsets,
            interior,
            coef,
            coef_t,
            symmetric,
            clamped_points,
            sigma_grid,
            mean_diffusion,
            sine: SineBasis::new(d, grid.n_per_axis(), h),
            leak_events: AtomicU64::new(0),
            max_leak_ratio: AtomicU64::new(0f64.to_bits()),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn field(&self) -> &CoefficientField {
        &self.field
    }
    pub fn lambda_grid(&self) -> f64 {
        self.lambda_grid
    }
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
    pub fn stencil_size(&self) -> usize {
        self.offsets.len()
    }
    /// Number of interior points at which the drift was clamped.
    pub fn clamped_points(&self) -> usize {
        self.clamped_points
    }
    /// `σ` at grid point `p`, row-major `d × d1`.
    pub fn sigma_at(&self, p: usize) -> &[f64] {
        let m = self.grid.dim() * self.field.noise_dim();
        &self.sigma_grid[p * m..(p + 1) * m]
    }

    pub(crate) fn sine(&self) -> &SineBasis {
        &self.sine
    }

    /// Interior average of `a^{ii}` per axis.
    pub fn mean_diffusion(&self) -> &[f64] {
        &self.mean_diffusion
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Number of evolutions whose boundary layer exceeded the leak threshold.
    pub fn leak_events(&self) -> u64 {
        self.leak_events.load(Ordering::Relaxed)
    }

    /// Largest observed `max|u_boundary-layer| / max|f|`.
    pub fn max_leak_ratio(&self) -> f64 {
        f64::from_bits(self.max_leak_ratio.load(Ordering::Relaxed))
    }

    pub(crate) fn record_leak(&self, ratio: f64) {
        let mut cur = self.max_leak_ratio.load(Ordering::Relaxed);
        while ratio > f64::from_bits(cur) {
            match self.max_leak_ratio.compare_exchange_weak(cur, ratio.to_bits(), Ordering::Relaxed, Ordering::Relaxed)
            {
                Ok(_) => break,
                Err(v) => cur = v,
            }
        }
        if ratio > BOUNDARY_LEAK_THRESHOLD {
            self.leak_events.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Diagonal of `L` (or `Lᵀ`, identical) at each grid point; zero on the boundary.
    pub fn diagonal(&self) -> Vec<f64> {
        let n_off = self.offsets.len();
        let mut out = vec![0.0; self.grid.len()];
        for (row, &p) in self.interior.iter().enumerate() {
            out[p] = self.coef[row * n_off];
        }
        out
    }

    /// `y = L x` (or `Lᵀ x`) with `y = 0` on the boundary.
    pub fn apply_into<T>(&self, x: &[T], y: &mut [T], transpose: bool)
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n_off = self.offsets.len();
        let coef = if transpose { &self.coef_t } else { &self.coef };
        y.iter_mut().for_each(|v| *v = T::default());
        for (row, &p) in self.interior.iter().enumerate() {
            let c = &coef[row * n_off..(row + 1) * n_off];
            let mut acc = T::default();
            for (s, &o) in self.offsets.iter().enumerate() {
                acc = acc + x[(p as isize + o) as usize] * c[s];
            }
            y[p] = acc;
        }
    }

    pub fn apply(&self, f: &DiscreteField) -> DiscreteField {
        let mut out = DiscreteField::zeros(&self.grid);
        self.apply_into(&f.values, &mut out.values, false);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{user_defined_field, ExpressionTable, FieldSpec, BuiltinFieldId, Smoothness};
    use crate::pde::grid::make_grid;

    fn table(sigma: &[&[&str]], drift: &[&str]) -> ExpressionTable {
        ExpressionTable {
            sigma: sigma.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            drift: drift.iter().map(|s| s.to_string()).collect(),
            delta: 0.5,
            smoothness: Smoothness::AnalyticSmooth,
        }
    }

    #[test]
    fn quadratic_is_exact_for_scaled_identity() {
        let s = std::f64::consts::SQRT_2.to_string();
        let f = user_defined_field(2, &table(&[&[&s, "0"], &["0", &s]], &["0", "0"])).unwrap();
        let g = make_grid(2, 1.0, 21).unwrap();
        let ctx = OperatorContext::assemble(&f, &g, None).unwrap();
        let lf = ctx.apply(&DiscreteField::sample(&g, |x| x[0] * x[0] + x[1] * x[1]));
        for &p in ctx.interior() {
            assert!((lf.values[p] - 4.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_terms_are_exact_on_quadratics() {
        // σ = [[1, 1], [0, 1]] gives a = [[2, 1], [1, 1]], L(xy) = a^{12} = 1
        let f = user_defined_field(2, &table(&[&["1", "1"], &["0", "1"]], &["0", "0"])).unwrap();
        let g = make_grid(2, 1.0, 17).unwrap();
        let ctx = OperatorContext::assemble(&f, &g, None).unwrap();
        assert_eq!(ctx.stencil_size(), 9);
        let lf = ctx.apply(&DiscreteField::sample(&g, |x| x[0] * x[1]));
        for &p in ctx.interior() {
            assert!((lf.values[p] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_drift_on_linear_and_constants() {
        let f = user_defined_field(3, &table(&[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]], &["3", "0", "0"]))
            .unwrap();
        let g = make_grid(3, 1.0, 16).unwrap();
        let ctx = OperatorContext::assemble(&f, &g, Some(0.0)).unwrap();
        let lf = ctx.apply(&DiscreteField::sample(&g, |x| x[0]));
        let l1 = ctx.apply(&DiscreteField::sample(&g, |_| 1.0));
        for &p in ctx.interior() {
            assert!((lf.values[p] - 3.0).abs() < 1e-10);
            assert!(l1.values[p].abs() < 1e-10);
        }
        assert!(!ctx.is_symmetric());
    }

    #[test]
    fn transpose_matches_inner_product() {
        let f = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(4).build().unwrap();
        let g = make_grid(2, 2.0, 17).unwrap();
        let ctx = OperatorContext::assemble(&f, &g, None).unwrap();
        let mut u = DiscreteField::sample(&g, |x| (x[0] * 1.3).sin() + x[1] * x[1]);
        let mut v = DiscreteField::sample(&g, |x| (x[1] - 0.2 * x[0]).cos());
        for p in 0..g.len() {
            if g.is_boundary(p) {
                u.values[p] = 0.0;
                v.values[p] = 0.0;
            }
        }
        let (mut lu, mut ltv) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        ctx.apply_into(&u.values, &mut lu, false);
        ctx.apply_into(&v.values, &mut ltv, true);
        let a: f64 = lu.iter().zip(&v.values).map(|(x, y)| x * y).sum();
        let b: f64 = u.values.iter().zip(&ltv).map(|(x, y)| x * y).sum();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}
