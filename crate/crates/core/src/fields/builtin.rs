use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{BuiltinFieldId, CoefficientField, Coefficients, FieldParams, Smoothness};
use crate::error::{Error, Result};

/// Below this radius the singular fields return their declared value at the singularity.
const SINGULAR_GUARD: f64 = 1e-12;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Smooth cutoff `exp(1 − 1/(1 − (|x|/ρ)²))` on `B_ρ`, equal to 1 at the origin.
pub fn cutoff_bump(x: &[f64], radius: f64) -> f64 {
    let s = norm(x) / radius;
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

#[derive(Debug)]
struct ConstantIdentity {
    d: usize,
    d1: usize,
}

impl Coefficients for ConstantIdentity {
    fn sigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.d {
            out[i * self.d1 + i] = 1.0;
        }
    }
    fn drift_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn drift_free(&self) -> bool {
        true
    }
    fn jacobian_into(&self, _x: &[f64], dsigma: &mut [f64], ddrift: &mut [f64]) -> bool {
        dsigma.iter_mut().for_each(|v| *v = 0.0);
        ddrift.iter_mut().for_each(|v| *v = 0.0);
        true
    }
}

/// Scalar diffusion `c(x) I` with `c = 2 + ζ(x) sin(ln|ln|x||)`, `c(0) = 2`.
#[derive(Debug)]
struct LoglogDiffusion {
    d: usize,
    radius: f64,
}

impl LoglogDiffusion {
    fn coefficient(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        if r < SINGULAR_GUARD {
            return 2.0;
        }
        let z = cutoff_bump(x, self.radius);
        if z == 0.0 {
            return 2.0;
        }
        2.0 + z * r.ln().abs().ln().sin()
    }
}

impl Coefficients for LoglogDiffusion {
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let c = self.coefficient(x);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.d {
            out[i * self.d + i] = c;
        }
    }
    fn drift_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn drift_free(&self) -> bool {
        true
    }
}

/// `σ = I`, `b = l ζ(x) / (|x| ln|x|)`, `b(0) = 0`.
#[derive(Debug)]
struct LogDrift {
    d: usize,
    radius: f64,
    direction: Vec<f64>,
}

impl Coefficients for LogDrift {
    fn sigma_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.d {
            out[i * self.d + i] = 1.0;
        }
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let z = cutoff_bump(x, self.radius);
        let s = if r < SINGULAR_GUARD || z == 0.0 { 0.0 } else { z / (r * r.ln()) };
        for (o, l) in out.iter_mut().zip(&self.direction) {
            *o = s * l;
        }
    }
}

/// `∂_j (x/|x|)_i = (δ_ij − u_i u_j)/|x|`, row-major `i * d + j`; zero at the origin.
fn unit_jacobian(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let r = norm(x);
    let mut out = vec![0.0; d * d];
    if r < SINGULAR_GUARD {
        return out;
    }
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = ((i == j) as u8 as f64 - x[i] * x[j] / (r * r)) / r;
        }
    }
    out
}

/// `σ¹ = x/|x|`, `σ² = x*/|x|` with `x* = (−x², x¹)`; identity at the origin.
#[derive(Debug)]
struct Vortex2d;

impl Coefficients for Vortex2d {
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let (c, s) = if r < SINGULAR_GUARD { (1.0, 0.0) } else { (x[0] / r, x[1] / r) };
        // rows i, columns k: [[c, -s], [s, c]]
        out[0] = c;
        out[1] = -s;
        out[2] = s;
        out[3] = c;
    }
    fn drift_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn drift_free(&self) -> bool {
        true
    }
    fn jacobian_into(&self, x: &[f64], dsigma: &mut [f64], ddrift: &mut [f64]) -> bool {
        let du = unit_jacobian(x);
        for j in 0..2 {
            let (dc, ds) = (du[j], du[2 + j]);
            dsigma[j] = dc;
            dsigma[2 + j] = -ds;
            dsigma[4 + j] = ds;
            dsigma[6 + j] = dc;
        }
        ddrift.iter_mut().for_each(|v| *v = 0.0);
        true
    }
}

/// Row `i` of `σ` holds `x/|x|` in columns `3i..3i+3`; at the origin each block holds `e₁`.
#[derive(Debug)]
struct BlockVortex3d;

impl Coefficients for BlockVortex3d {
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let u = if r < SINGULAR_GUARD { [1.0, 0.0, 0.0] } else { [x[0] / r, x[1] / r, x[2] / r] };
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            for j in 0..3 {
                out[i * 9 + 3 * i + j] = u[j];
            }
        }
    }
    fn drift_into(&self, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn drift_free(&self) -> bool {
        true
    }
    fn jacobian_into(&self, x: &[f64], dsigma: &mut [f64], ddrift: &mut [f64]) -> bool {
        let du = unit_jacobian(x);
        dsigma.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            for m in 0..3 {
                for j in 0..3 {
                    dsigma[(i * 9 + 3 * i + m) * 3 + j] = du[m * 3 + j];
                }
            }
        }
        ddrift.iter_mut().for_each(|v| *v = 0.0);
        true
    }
}

/// Component-wise closed-form description of a user field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionTable {
    /// `d` rows of `d1` expressions each.
    pub sigma: Vec<Vec<String>>,
    pub drift: Vec<String>,
    pub delta: f64,
    #[serde(default = "default_smoothness")]
    pub smoothness: Smoothness,
}

fn default_smoothness() -> Smoothness {
    Smoothness::AnalyticSmooth
}

#[derive(Debug)]
struct UserField {
    sigma: Vec<Expr>,
    drift: Vec<Expr>,
    drift_free: bool,
}

impl Coefficients for UserField {
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.sigma) {
            *o = e.eval(x);
        }
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval(x);
        }
    }
    fn drift_free(&self) -> bool {
        self.drift_free
    }
}

pub fn user_defined_field(d: usize, table: &ExpressionTable) -> Result<CoefficientField> {
    if table.sigma.len() != d || table.drift.len() != d {
        return Err(Error::InvalidArgument(format!("expression table must have {d} sigma rows and {d} drift entries")));
    }
    let d1 = table.sigma[0].len();
    if table.sigma.iter().any(|row| row.len() != d1) {
        return Err(Error::InvalidArgument("sigma rows must have equal length".into()));
    }
    let sigma = table
        .sigma
        .iter()
        .flatten()
        .map(|s| Expr::parse(s, d))
        .collect::<Result<Vec<_>>>()?;
    let drift = table.drift.iter().map(|s| Expr::parse(s, d)).collect::<Result<Vec<_>>>()?;
    let drift_free = drift.iter().all(|e| e.is_constant() && e.eval(&vec![0.0; d]) == 0.0);
    CoefficientField::new(
        BuiltinFieldId::UserDefined,
        d,
        d1,
        table.smoothness,
        table.delta,
        Arc::new(UserField { sigma, drift, drift_free }),
    )
}

/// Construct one of the built-in fields.
pub fn builtin_field(id: BuiltinFieldId, d: usize, params: &FieldParams) -> Result<CoefficientField> {
    let unsupported = || Error::UnsupportedField { id: id.name().to_string(), d };
    if d == 0 {
        return Err(unsupported());
    }
    let radius = params.cutoff_radius;
    if matches!(id, BuiltinFieldId::LoglogOscillatingDiffusion | BuiltinFieldId::LogSingularDrift)
        && !(radius > 0.0 && radius <= 0.5)
    {
        return Err(Error::InvalidArgument(format!("cutoff radius {radius} must lie in (0, 1/2]")));
    }
    let origin = vec![vec![0.0; d]];
    match id {
        BuiltinFieldId::ConstantIdentity => {
            let d1 = params.d1.unwrap_or(d);
            CoefficientField::new(id, d, d1, Smoothness::AnalyticSmooth, 1.0, Arc::new(ConstantIdentity { d, d1 }))
        }
        BuiltinFieldId::LoglogOscillatingDiffusion => Ok(CoefficientField::new(
            id,
            d,
            d,
            Smoothness::RawSingular,
            1.0 / 9.0,
            Arc::new(LoglogDiffusion { d, radius }),
        )?
        .with_singular_points(origin)),
        BuiltinFieldId::LogSingularDrift => {
            let direction = match &params.drift_direction {
                Some(l) if l.len() == d => l.clone(),
                Some(l) => {
                    return Err(Error::InvalidArgument(format!("drift direction has length {}, expected {d}", l.len())))
                }
                None => {
                    let mut e1 = vec![0.0; d];
                    e1[0] = 1.0;
                    e1
                }
            };
            Ok(CoefficientField::new(id, d, d, Smoothness::RawSingular, 1.0, Arc::new(LogDrift { d, radius, direction }))?
                .with_singular_points(origin))
        }
        BuiltinFieldId::Vortex2d => {
            if d != 2 {
                return Err(unsupported());
            }
            Ok(CoefficientField::new(id, 2, 2, Smoothness::RawSingular, 1.0, Arc::new(Vortex2d))?
                .with_singular_points(origin))
        }
        BuiltinFieldId::BlockVortex3d => {
            if d != 3 {
                return Err(unsupported());
            }
            Ok(CoefficientField::new(id, 3, 9, Smoothness::RawSingular, 1.0, Arc::new(BlockVortex3d))?
                .with_singular_points(origin))
        }
        BuiltinFieldId::UserDefined => Err(Error::InvalidArgument(
            "user-defined fields are built from an expression table".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn vortex_diffusion_is_identity() {
        let f = builtin_field(BuiltinFieldId::Vortex2d, 2, &FieldParams::default()).unwrap();
        for x in [[0.3, -1.1], [0.0, 0.0], [1e-14, 0.0], [-2.0, 5.0]] {
            assert!(max_abs_diff(&f.diffusion(&x), &[1.0, 0.0, 0.0, 1.0]) < 1e-14);
        }
        assert_eq!(f.sigma(&[0.0, 0.0]), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.sigma(&[0.0, 2.0]), vec![0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn block_vortex_diffusion_is_identity() {
        let f = builtin_field(BuiltinFieldId::BlockVortex3d, 3, &FieldParams::default()).unwrap();
        assert_eq!(f.noise_dim(), 9);
        let id3 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for x in [[0.3, -1.1, 0.2], [0.0; 3]] {
            assert!(max_abs_diff(&f.diffusion(&x), &id3) < 1e-14);
        }
        assert!(builtin_field(BuiltinFieldId::BlockVortex3d, 2, &FieldParams::default()).is_err());
        assert!(builtin_field(BuiltinFieldId::Vortex2d, 3, &FieldParams::default()).is_err());
    }

    #[test]
    fn constant_identity_shape() {
        let f = builtin_field(BuiltinFieldId::ConstantIdentity, 3, &FieldParams::default()).unwrap();
        assert_eq!(f.sigma(&[1.0, 2.0, 3.0]), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.drift(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
        let wide = builtin_field(BuiltinFieldId::ConstantIdentity, 2, &FieldParams { d1: Some(3), ..Default::default() })
            .unwrap();
        assert_eq!(wide.sigma(&[0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn loglog_coefficient_range() {
        let f = builtin_field(BuiltinFieldId::LoglogOscillatingDiffusion, 2, &FieldParams::default()).unwrap();
        let c = f.sigma(&[0.1, 0.0])[0];
        assert!((1.0..=3.0).contains(&c));
        let expected = 2.0 + cutoff_bump(&[0.1, 0.0], 0.5) * (0.1f64.ln().abs().ln()).sin();
        assert!((c - expected).abs() < 1e-15);
        assert_eq!(f.sigma(&[0.0, 0.0])[0], 2.0);
        assert_eq!(f.sigma(&[0.7, 0.0])[0], 2.0);
    }

    #[test]
    fn log_drift_vanishes_at_origin_and_outside_cutoff() {
        let f = builtin_field(BuiltinFieldId::LogSingularDrift, 3, &FieldParams::default()).unwrap();
        assert_eq!(f.drift(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(f.drift(&[0.6, 0.0, 0.0]), vec![0.0; 3]);
        let b = f.drift(&[0.1, 0.0, 0.0]);
        let expected = cutoff_bump(&[0.1, 0.0, 0.0], 0.5) / (0.1 * 0.1f64.ln());
        assert!((b[0] - expected).abs() < 1e-14);
        assert_eq!(b[1], 0.0);
    }
}
