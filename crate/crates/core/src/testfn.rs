//! Test functions `f` fed to the semigroup, chaos and Monte Carlo pipelines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::cutoff_bump;

/// Smooth transition from 1 on `[0, inner]` to 0 on `[outer, ∞)`.
fn plateau(s: f64, inner: f64, outer: f64) -> f64 {
    let h = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let (a, b) = (h(outer - s), h(s - inner));
    a / (a + b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    /// `A exp(−|x − c|²/(2s))`.
    Gaussian { center: Vec<f64>, variance: f64, amplitude: f64 },
    /// Normalized density of `N(c, s I)`.
    GaussianDensity { center: Vec<f64>, variance: f64 },
    /// `A x^{axis} exp(−|x|²/(2s))`; odd under rotation by π.
    OddGaussian { axis: usize, variance: f64, amplitude: f64 },
    /// `A exp(1 − 1/(1 − |x − c|²/ρ²))` on `B_ρ(c)`.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `x^{axis} ψ(|x|)` with `ψ = 1` on `B_inner` and `0` outside `B_outer`.
    ClippedLinear { axis: usize, inner: f64, outer: f64 },
    Constant { value: f64 },
}

impl TestFunction {
    pub fn gaussian(center: Vec<f64>, variance: f64) -> Self {
        Self::Gaussian { center, variance, amplitude: 1.0 }
    }

    pub fn bump(center: Vec<f64>, radius: f64) -> Self {
        Self::Bump { center, radius, amplitude: 1.0 }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            Self::Gaussian { center, variance, .. } | Self::GaussianDensity { center, variance } => {
                if center.len() != d {
                    return bad(format!("test function center has length {}, expected {d}", center.len()));
                }
                if *variance <= 0.0 {
                    return bad("variance must be positive".into());
                }
            }
            Self::OddGaussian { axis, variance, .. } => {
                if *axis >= d || *variance <= 0.0 {
                    return bad("odd Gaussian needs axis < d and positive variance".into());
                }
            }
            Self::Bump { center, radius, .. } => {
                if center.len() != d || *radius <= 0.0 {
                    return bad("bump needs a center of length d and a positive radius".into());
                }
            }
            Self::ClippedLinear { axis, inner, outer } => {
                if *axis >= d || !(0.0 < *inner && inner < outer) {
                    return bad("clipped linear needs axis < d and 0 < inner < outer".into());
                }
            }
            Self::Constant { .. } => {}
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian { center, variance, amplitude } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amplitude * (-0.5 * r2 / variance).exp()
            }
            Self::GaussianDensity { center, variance } => {
                let d = x.len() as f64;
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                (2.0 * std::f64::consts::PI * variance).powf(-0.5 * d) * (-0.5 * r2 / variance).exp()
            }
            Self::OddGaussian { axis, variance, amplitude } => {
                let r2: f64 = x.iter().map(|a| a * a).sum();
                amplitude * x[*axis] * (-0.5 * r2 / variance).exp()
            }
            Self::Bump { center, radius, amplitude } => {
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                amplitude * cutoff_bump(&y, *radius)
            }
            Self::ClippedLinear { axis, inner, outer } => {
                let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                x[*axis] * plateau(r, *inner, *outer)
            }
            Self::Constant { value } => *value,
        }
    }

    /// Radius outside of which `f` is negligible (below `1e-12` relative), if any.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Self::Gaussian { center, variance, .. } | Self::GaussianDensity { center, variance } => {
                let c = center.iter().map(|v| v * v).sum::<f64>().sqrt();
                Some(c + (2.0 * 27.7 * variance).sqrt())
            }
            Self::OddGaussian { variance, .. } => Some((2.0 * 30.0 * variance).sqrt()),
            Self::Bump { center, radius, .. } => Some(center.iter().map(|v| v * v).sum::<f64>().sqrt() + radius),
            Self::ClippedLinear { outer, .. } => Some(*outer),
            Self::Constant { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_is_smooth_step() {
        assert_eq!(plateau(0.5, 1.0, 2.0), 1.0);
        assert_eq!(plateau(2.5, 1.0, 2.0), 0.0);
        let mid = plateau(1.5, 1.0, 2.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clipped_linear_is_linear_inside() {
        let f = TestFunction::ClippedLinear { axis: 0, inner: 1.0, outer: 1.8 };
        assert_eq!(f.eval(&[0.3, -0.2]), 0.3);
        assert_eq!(f.eval(&[2.0, 0.0]), 0.0);
    }

    #[test]
    fn density_normalization_at_center() {
        let f = TestFunction::GaussianDensity { center: vec![0.0, 0.0], variance: 0.25 };
        let expected = 1.0 / (2.0 * std::f64::consts::PI * 0.25);
        assert!((f.eval(&[0.0, 0.0]) - expected).abs() < 1e-14);
    }
}
