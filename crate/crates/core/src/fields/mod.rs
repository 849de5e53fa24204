//! Coefficient fields `(σ, b)` of the equation `dx = σ^k(x) dw^k + b(x) dt`.
//!
//! A [`CoefficientField`] is immutable and cheap to clone; all evaluation is
//! pure. `σ` is stored row-major as a `d × d1` matrix whose columns are the
//! noise channels `σ^k`.

mod builtin;
mod diagnostics;
pub mod expr;
mod mollify;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{builtin_field, cutoff_bump, user_defined_field, ExpressionTable};
pub use diagnostics::{
    ellipticity_check, ld_norm, oscillation_modulus, EllipticityReport, LdComponent, LdNorm, LdOptions,
    OscillationTarget,
};
pub use mollify::{mollifier_bump, mollify, MOLLIFIER_ORDER};

/// Pointwise access to `σ` and `b`.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// Row-major `d × d1` matrix, `out[i * d1 + k] = σ^{ik}(x)`.
    fn sigma_into(&self, x: &[f64], out: &mut [f64]);

    fn drift_into(&self, x: &[f64], out: &mut [f64]);

    /// Whether `b` vanishes identically.
    fn drift_free(&self) -> bool {
        false
    }

    /// Analytic Jacobians, when known: `dsigma[(i * d1 + k) * d + j] = ∂_j σ^{ik}`,
    /// `ddrift[i * d + j] = ∂_j b^i`. Returns `false` if unavailable.
    fn jacobian_into(&self, _x: &[f64], _dsigma: &mut [f64], _ddrift: &mut [f64]) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinFieldId {
    #[serde(rename = "constant-identity")]
    ConstantIdentity,
    #[serde(rename = "loglog-oscillating-diffusion")]
    LoglogOscillatingDiffusion,
    #[serde(rename = "log-singular-drift")]
    LogSingularDrift,
    #[serde(rename = "vortex-2d")]
    Vortex2d,
    #[serde(rename = "block-vortex-3d")]
    BlockVortex3d,
    #[serde(rename = "user-defined")]
    UserDefined,
}

impl BuiltinFieldId {
    pub fn name(self) -> &'static str {
        match self {
            Self::ConstantIdentity => "constant-identity",
            Self::LoglogOscillatingDiffusion => "loglog-oscillating-diffusion",
            Self::LogSingularDrift => "log-singular-drift",
            Self::Vortex2d => "vortex-2d",
            Self::BlockVortex3d => "block-vortex-3d",
            Self::UserDefined => "user-defined",
        }
    }
}

impl fmt::Display for BuiltinFieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "level")]
pub enum Smoothness {
    AnalyticSmooth,
    Mollified(u32),
    RawSingular,
}

/// Settings for the built-in fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    /// Noise dimension for `constant-identity` (zero columns appended beyond `d`).
    pub d1: Option<usize>,
    /// Support radius of the cutoff `ζ` used by the two classical examples (≤ 1/2).
    pub cutoff_radius: f64,
    /// Direction `l` of the log-singular drift; defaults to `e_1`.
    pub drift_direction: Option<Vec<f64>>,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { d1: None, cutoff_radius: 0.5, drift_direction: None }
    }
}

/// Serializable description of a field, as stored in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub id: BuiltinFieldId,
    pub d: usize,
    #[serde(default)]
    pub mollification: Option<u32>,
    #[serde(default)]
    pub params: FieldParams,
    #[serde(default)]
    pub expressions: Option<ExpressionTable>,
}

impl FieldSpec {
    pub fn builtin(id: BuiltinFieldId, d: usize) -> Self {
        Self { id, d, mollification: None, params: FieldParams::default(), expressions: None }
    }

    pub fn mollified(mut self, n: u32) -> Self {
        self.mollification = Some(n);
        self
    }

    pub fn build(&self) -> Result<CoefficientField> {
        let base = match self.id {
            BuiltinFieldId::UserDefined => {
                let table = self.expressions.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("user-defined field requires an expression table".into())
                })?;
                user_defined_field(self.d, table)?
            }
            id => builtin_field(id, self.d, &self.params)?,
        };
        let mut field = match self.mollification {
            Some(n) => mollify(&base, n)?,
            None => base,
        };
        field.spec = Some(self.clone());
        Ok(field)
    }
}

/// The pair `(σ, b)` with dimensions and ellipticity metadata.
#[derive(Clone)]
pub struct CoefficientField {
    pub(crate) id: BuiltinFieldId,
    pub(crate) d: usize,
    pub(crate) d1: usize,
    pub(crate) smoothness: Smoothness,
    pub(crate) delta: f64,
    pub(crate) norm_b: Option<f64>,
    pub(crate) norm_sigma_x: Option<f64>,
    pub(crate) singular_points: Vec<Vec<f64>>,
    pub(crate) inner: Arc<dyn Coefficients>,
    pub(crate) spec: Option<FieldSpec>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("id", &self.id)
            .field("d", &self.d)
            .field("d1", &self.d1)
            .field("smoothness", &self.smoothness)
            .field("delta", &self.delta)
            .finish()
    }
}

impl CoefficientField {
    pub(crate) fn new(
        id: BuiltinFieldId,
        d: usize,
        d1: usize,
        smoothness: Smoothness,
        delta: f64,
        inner: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        if d == 0 || d1 < d {
            return Err(Error::InvalidArgument(format!("need d ≥ 1 and d1 ≥ d, got d = {d}, d1 = {d1}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument(format!("ellipticity constant {delta} outside (0, 1]")));
        }
        Ok(Self {
            id,
            d,
            d1,
            smoothness,
            delta,
            norm_b: None,
            norm_sigma_x: None,
            singular_points: Vec::new(),
            inner,
            spec: None,
        })
    }

    pub fn id(&self) -> BuiltinFieldId {
        self.id
    }
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn noise_dim(&self) -> usize {
        self.d1
    }
    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
    /// Declared ellipticity constant `δ`.
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn norm_b(&self) -> Option<f64> {
        self.norm_b
    }
    pub fn norm_sigma_x(&self) -> Option<f64> {
        self.norm_sigma_x
    }
    pub fn singular_points(&self) -> &[Vec<f64>] {
        &self.singular_points
    }
    pub fn spec(&self) -> Option<&FieldSpec> {
        self.spec.as_ref()
    }
    pub fn drift_free(&self) -> bool {
        self.inner.drift_free()
    }

    pub fn with_declared_norms(mut self, norm_b: Option<f64>, norm_sigma_x: Option<f64>) -> Self {
        self.norm_b = norm_b;
        self.norm_sigma_x = norm_sigma_x;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub(crate) fn with_singular_points(mut self, pts: Vec<Vec<f64>>) -> Self {
        self.singular_points = pts;
        self
    }

    #[inline]
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.sigma_into(x, out)
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        if self.inner.drift_free() {
            out.iter_mut().for_each(|v| *v = 0.0);
        } else {
            self.inner.drift_into(x, out)
        }
    }

    pub fn sigma(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.d1];
        self.sigma_into(x, &mut out);
        out
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.drift_into(x, &mut out);
        out
    }

    /// Diffusion matrix `a = σσ*`, row-major `d × d`.
    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let s = self.sigma(x);
        diffusion_from_sigma(&s, self.d, self.d1)
    }

    /// Jacobians of `σ` and `b` at `x` (see [`Coefficients::jacobian_into`] for layout).
    ///
    /// Uses the analytic form when available, otherwise fourth-order central
    /// differences with step `0.1 / n` for `mollified(n)` fields.
    pub fn jacobian(&self, x: &[f64]) -> Result<FieldJacobian> {
        let step = match self.smoothness {
            Smoothness::RawSingular => return Err(Error::RawSingular),
            Smoothness::Mollified(n) => 0.1 / n as f64,
            Smoothness::AnalyticSmooth => 1e-3,
        };
        Ok(self.jacobian_with_step(x, step))
    }

    pub(crate) fn jacobian_with_step(&self, x: &[f64], step: f64) -> FieldJacobian {
        let (d, d1) = (self.d, self.d1);
        let mut jac = FieldJacobian { d, d1, dsigma: vec![0.0; d * d1 * d], ddrift: vec![0.0; d * d] };
        if self.inner.jacobian_into(x, &mut jac.dsigma, &mut jac.ddrift) {
            return jac;
        }
        let mut xp = x.to_vec();
        let mut s = vec![vec![0.0; d * d1]; 4];
        let mut b = vec![vec![0.0; d]; 4];
        const SHIFTS: [f64; 4] = [2.0, 1.0, -1.0, -2.0];
        for j in 0..d {
            for (slot, &m) in SHIFTS.iter().enumerate() {
                xp[j] = x[j] + m * step;
                self.sigma_into(&xp, &mut s[slot]);
                self.drift_into(&xp, &mut b[slot]);
            }
            xp[j] = x[j];
            let c = 1.0 / (12.0 * step);
            for ik in 0..d * d1 {
                jac.dsigma[ik * d + j] = c * (-s[0][ik] + 8.0 * s[1][ik] - 8.0 * s[2][ik] + s[3][ik]);
            }
            for i in 0..d {
                jac.ddrift[i * d + j] = c * (-b[0][i] + 8.0 * b[1][i] - 8.0 * b[2][i] + b[3][i]);
            }
        }
        jac
    }
}

/// Which coefficient a derivative is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldComponent {
    /// Column `σ^k` (zero-based `k`).
    Sigma(usize),
    Drift,
}

/// Jacobians of `σ` and `b` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldJacobian {
    pub d: usize,
    pub d1: usize,
    pub dsigma: Vec<f64>,
    pub ddrift: Vec<f64>,
}

impl FieldJacobian {
    /// `σ^k_{(l)} = l^j ∂_j σ^k`.
    pub fn sigma_along(&self, k: usize, l: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.d) {
            let base = (i * self.d1 + k) * self.d;
            *o = (0..self.d).map(|j| self.dsigma[base + j] * l[j]).sum();
        }
    }

    pub fn drift_along(&self, l: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.d) {
            *o = (0..self.d).map(|j| self.ddrift[i * self.d + j] * l[j]).sum();
        }
    }
}

/// Derivative of `σ^k` or `b` at `x` along `l`.
pub fn directional_derivative(
    field: &CoefficientField,
    x: &[f64],
    l: &[f64],
    component: FieldComponent,
) -> Result<Vec<f64>> {
    if x.len() != field.d || l.len() != field.d {
        return Err(Error::InvalidArgument("point and direction must have length d".into()));
    }
    let jac = field.jacobian(x)?;
    let mut out = vec![0.0; field.d];
    match component {
        FieldComponent::Sigma(k) => {
            if k >= field.d1 {
                return Err(Error::InvalidArgument(format!("noise index {k} ≥ d1 = {}", field.d1)));
            }
            jac.sigma_along(k, l, &mut out)
        }
        FieldComponent::Drift => jac.drift_along(l, &mut out),
    }
    Ok(out)
}

pub(crate) fn diffusion_from_sigma(s: &[f64], d: usize, d1: usize) -> Vec<f64> {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d1).map(|k| s[i * d1 + k] * s[j * d1 + k]).sum();
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_builder() {
        let spec = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(16);
        let field = spec.build().unwrap();
        assert_eq!(field.smoothness(), Smoothness::Mollified(16));
        assert_eq!(field.spec(), Some(&spec));
    }

    #[test]
    fn raw_singular_has_no_derivative() {
        let field = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).build().unwrap();
        let err = directional_derivative(&field, &[1.0, 0.0], &[0.0, 1.0], FieldComponent::Sigma(0));
        assert!(matches!(err, Err(Error::RawSingular)));
    }

    #[test]
    fn constant_identity_has_zero_derivative() {
        let field = FieldSpec::builtin(BuiltinFieldId::ConstantIdentity, 3).build().unwrap();
        for k in 0..3 {
            let v = directional_derivative(&field, &[0.3, -1.0, 2.0], &[1.0, 2.0, 3.0], FieldComponent::Sigma(k))
                .unwrap();
            assert!(v.iter().all(|x| *x == 0.0));
        }
        let v = directional_derivative(&field, &[0.3, -1.0, 2.0], &[1.0, 0.0, 0.0], FieldComponent::Drift).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn linear_field_derivative_is_exact() {
        // σ = [I | x1 I]
        let table = ExpressionTable {
            sigma: vec![
                vec!["1".into(), "0".into(), "x1".into(), "0".into()],
                vec!["0".into(), "1".into(), "0".into(), "x1".into()],
            ],
            drift: vec!["0".into(), "0".into()],
            delta: 0.5,
            smoothness: Smoothness::AnalyticSmooth,
        };
        let field = user_defined_field(2, &table).unwrap();
        let e1 = [1.0, 0.0];
        for k in 0..4 {
            let v = directional_derivative(&field, &[0.7, -0.2], &e1, FieldComponent::Sigma(k)).unwrap();
            let expected: [f64; 2] = match k {
                2 => [1.0, 0.0],
                3 => [0.0, 1.0],
                _ => [0.0, 0.0],
            };
            for i in 0..2 {
                assert!((v[i] - expected[i]).abs() < 1e-10, "k={k} i={i} v={:?}", v);
            }
        }
    }

    #[test]
    fn mollified_vortex_derivative_matches_one_sided_oracle() {
        let field = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(32).build().unwrap();
        let x = [1.0, 0.0];
        let l = [0.0, 1.0];
        // one-sided fourth-order difference along l, independent of the central stencil
        let h = 0.1 / 32.0;
        let eval = |s: f64| field.sigma(&[x[0] + s * l[0], x[1] + s * l[1]]);
        let f: Vec<Vec<f64>> = (0..5).map(|m| eval(m as f64 * h)).collect();
        for k in 0..2 {
            let got = directional_derivative(&field, &x, &l, FieldComponent::Sigma(k)).unwrap();
            for i in 0..2 {
                let idx = i * 2 + k;
                let oracle = (-25.0 * f[0][idx] + 48.0 * f[1][idx] - 36.0 * f[2][idx] + 16.0 * f[3][idx]
                    - 3.0 * f[4][idx])
                    / (12.0 * h);
                assert!((got[i] - oracle).abs() < 1e-6, "k={k} i={i}: {} vs {}", got[i], oracle);
            }
        }
    }

    #[test]
    fn directional_derivative_is_linear_in_direction() {
        let field = FieldSpec::builtin(BuiltinFieldId::Vortex2d, 2).mollified(16).build().unwrap();
        let x = [0.6, -0.9];
        let (l1, l2) = ([0.3, 1.1], [-0.7, 0.4]);
        let sum = [l1[0] + l2[0], l1[1] + l2[1]];
        for k in 0..2 {
            let a = directional_derivative(&field, &x, &l1, FieldComponent::Sigma(k)).unwrap();
            let b = directional_derivative(&field, &x, &l2, FieldComponent::Sigma(k)).unwrap();
            let c = directional_derivative(&field, &x, &sum, FieldComponent::Sigma(k)).unwrap();
            for i in 0..2 {
                assert!((a[i] + b[i] - c[i]).abs() < 1e-8);
            }
        }
    }
}
