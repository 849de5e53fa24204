use std::sync::Arc;

use super::{CoefficientField, Coefficients, Smoothness};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Gauss–Legendre order per axis of the mollifier quadrature.
pub const MOLLIFIER_ORDER: usize = 8;

/// Unnormalized bump `exp(−1/(1 − |z|²))` on the unit ball.
pub fn mollifier_bump(z: &[f64]) -> f64 {
    let s: f64 = z.iter().map(|v| v * v).sum();
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s)).exp()
    }
}

#[derive(Debug)]
struct Mollified {
    base: Arc<dyn Coefficients>,
    d: usize,
    d1: usize,
    /// Offsets `z_q / n`, flattened.
    offsets: Vec<f64>,
    weights: Vec<f64>,
    drift_free: bool,
}

impl Mollified {
    fn average(&self, x: &[f64], out: &mut [f64], len: usize, eval: impl Fn(&[f64], &mut [f64])) {
        let d = self.d;
        let mut y = vec![0.0; d];
        let mut v = vec![0.0; len];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (q, &w) in self.weights.iter().enumerate() {
            for i in 0..d {
                y[i] = x[i] - self.offsets[q * d + i];
            }
            eval(&y, &mut v);
            for (o, vi) in out.iter_mut().zip(&v) {
                *o += w * vi;
            }
        }
    }
}

impl Coefficients for Mollified {
    fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.average(x, out, self.d * self.d1, |y, v| self.base.sigma_into(y, v));
    }
    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        if self.drift_free {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        self.average(x, out, self.d, |y, v| self.base.drift_into(y, v));
    }
    fn drift_free(&self) -> bool {
        self.drift_free
    }
    /// The exact derivative of the quadrature rule, when the base field has one.
    fn jacobian_into(&self, x: &[f64], dsigma: &mut [f64], ddrift: &mut [f64]) -> bool {
        let d = self.d;
        let mut y = vec![0.0; d];
        let (mut ds, mut db) = (vec![0.0; dsigma.len()], vec![0.0; ddrift.len()]);
        dsigma.iter_mut().chain(ddrift.iter_mut()).for_each(|v| *v = 0.0);
        for (q, &w) in self.weights.iter().enumerate() {
            for i in 0..d {
                y[i] = x[i] - self.offsets[q * d + i];
            }
            if !self.base.jacobian_into(&y, &mut ds, &mut db) {
                return false;
            }
            for (o, v) in dsigma.iter_mut().zip(&ds) {
                *o += w * v;
            }
            for (o, v) in ddrift.iter_mut().zip(&db) {
                *o += w * v;
            }
        }
        true
    }
}

/// Convolution of `σ` and `b` with `ζ_n(x) = n^d ζ(nx)`.
///
/// The tensor rule weights `ζ(z_q) w_q` are renormalized to sum to one, so
/// constants are reproduced exactly.
pub fn mollify(field: &CoefficientField, n: u32) -> Result<CoefficientField> {
    if n == 0 {
        return Err(Error::InvalidArgument("mollification level must be ≥ 1".into()));
    }
    let d = field.d;
    let rule = gauss_legendre(MOLLIFIER_ORDER);
    let total = MOLLIFIER_ORDER.pow(d as u32);
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let mut z = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for zi in z.iter_mut() {
            let (node, weight) = rule[rem % MOLLIFIER_ORDER];
            rem /= MOLLIFIER_ORDER;
            *zi = node;
            w *= weight;
        }
        let b = mollifier_bump(&z);
        if b > 0.0 {
            offsets.extend(z.iter().map(|v| v / n as f64));
            weights.push(w * b);
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);

    let inner = Mollified {
        base: field.inner.clone(),
        d,
        d1: field.d1,
        offsets,
        weights,
        drift_free: field.inner.drift_free(),
    };
    let mut probes = field.singular_points.clone();
    probes.push(vec![0.0; d]);
    let mut s = vec![0.0; d * field.d1];
    let mut b = vec![0.0; d];
    for p in &probes {
        inner.sigma_into(p, &mut s);
        inner.drift_into(p, &mut b);
        if s.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("mollifier quadrature at {p:?}")));
        }
    }
    let mut out = CoefficientField::new(
        field.id,
        d,
        field.d1,
        Smoothness::Mollified(n),
        0.5 * field.delta,
        Arc::new(inner),
    )?;
    out.singular_points = field.singular_points.clone();
    out.norm_b = field.norm_b;
    out.norm_sigma_x = field.norm_sigma_x;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{BuiltinFieldId, FieldSpec};

    #[test]
    fn constant_field_is_unchanged() {
        let base = FieldSpec::builtin(BuiltinFieldId::ConstantIdentity, 3).build().unwrap();
        let m = mollify(&base, 4).unwrap();
        for x in [[0.1, 0.2, 0.3], [-3.0, 0.0, 1.0]] {
            let (a, b) = (base.sigma(&x), m.sigma(&x));
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn far_from_singularity_mollified_vortex_is_close() {
        let base = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).build().unwrap();
        let x = [2.0, 1.0];
        let mut prev = f64::INFINITY;
        for n in [4, 16, 64] {
            let m = mollify(&base, n).unwrap();
            let err = base.sigma(&x).iter().zip(m.sigma(&x)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn mollified_vortex_vanishes_at_origin() {
        let m = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(8).build().unwrap();
        assert!(m.sigma(&[0.0, 0.0]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn quadrature_jacobian_matches_differences() {
        let m = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(8).build().unwrap();
        let x = [0.5, -0.3];
        let jac = m.jacobian(&x).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let (sp, sm) = (m.sigma(&xp), m.sigma(&xm));
            for ik in 0..4 {
                let fd = (sp[ik] - sm[ik]) / (2.0 * h);
                assert!((jac.dsigma[ik * 2 + j] - fd).abs() < 1e-6, "{ik} {j}");
            }
        }
    }
}
