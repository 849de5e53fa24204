use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::CoefficientField;
use crate::quad::{gauss_legendre, gauss_legendre_on, pairwise_sum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub delta: f64,
    pub points: usize,
    /// Point at which the smallest eigenvalue was attained.
    pub argmin: Vec<f64>,
    pub pass: bool,
}

/// Extreme eigenvalues of `a(x)` over the cloud; passes iff they lie in `[δ, 1/δ]`.
pub fn ellipticity_check(field: &CoefficientField, cloud: &[Vec<f64>], delta: f64) -> EllipticityReport {
    let d = field.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut argmin = Vec::new();
    for x in cloud {
        let a = DMatrix::from_row_slice(d, d, &field.diffusion(x));
        let eig = a.symmetric_eigenvalues();
        let (emin, emax) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &e| (l.min(e), h.max(e)));
        if emin < lo {
            lo = emin;
            argmin = x.clone();
        }
        hi = hi.max(emax);
    }
    // Rounding in σσ* of unit-norm rows is a few ulp.
    let slack = 64.0 * f64::EPSILON;
    let pass = !cloud.is_empty() && lo >= delta - slack && hi <= 1.0 / delta + slack;
    EllipticityReport { min_eigenvalue: lo, max_eigenvalue: hi, delta, points: cloud.len(), argmin, pass }
}

/// Quantity whose oscillation is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OscillationTarget {
    /// The diffusion matrix `a = σσ*`.
    #[default]
    Diffusion,
    /// The matrix `σ` itself; informative when `a` is constant.
    Sigma,
}

fn uniform_in_ball(rng: &mut ChaCha8Rng, center: &[f64], rho: f64, out: &mut [f64]) {
    let d = center.len();
    let mut norm2 = 0.0;
    for o in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *o = g;
        norm2 += g * g;
    }
    let u: f64 = rng.random();
    let scale = rho * u.powf(1.0 / d as f64) / norm2.sqrt();
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + *o * scale;
    }
}

/// Monte Carlo estimate of `sup_x sup_{ρ<r} osc(·, B_ρ(x))`.
///
/// `ρ` runs over `r/4, r/2, 3r/4, r`; each double mean uses `samples`
/// independent pairs. The matrix norm is the Frobenius norm.
pub fn oscillation_modulus(
    field: &CoefficientField,
    r: f64,
    centers: &[Vec<f64>],
    samples: usize,
    seed: u64,
    target: OscillationTarget,
) -> f64 {
    let d = field.dim();
    let eval = |x: &[f64]| match target {
        OscillationTarget::Diffusion => field.diffusion(x),
        OscillationTarget::Sigma => field.sigma(x),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut z) = (vec![0.0; d], vec![0.0; d]);
    let mut best: f64 = 0.0;
    for c in centers {
        for frac in [0.25, 0.5, 0.75, 1.0] {
            let rho = frac * r;
            let mut acc = Vec::with_capacity(samples);
            for _ in 0..samples {
                uniform_in_ball(&mut rng, c, rho, &mut y);
                uniform_in_ball(&mut rng, c, rho, &mut z);
                let (ay, az) = (eval(&y), eval(&z));
                acc.push(ay.iter().zip(&az).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
            }
            best = best.max(pairwise_sum(&acc) / samples.max(1) as f64);
        }
    }
    best
}

/// Which coefficient an `L_d` norm is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdComponent {
    Drift,
    /// The Jacobian `σ^k_x` of column `k` (zero-based).
    SigmaX(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdOptions {
    /// Radius of the truncation ball `B_R`.
    pub radius: f64,
    /// Center of the dyadic refinement; defaults to the first declared singular point.
    pub center: Option<Vec<f64>>,
    pub radial_order: usize,
    /// Angular resolution (points in the azimuth; polar uses half as many).
    pub angular: usize,
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for LdOptions {
    fn default() -> Self {
        Self { radius: 4.0, center: None, radial_order: 16, angular: 48, tol: 1e-4, max_levels: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdNorm {
    pub value: f64,
    pub converged: bool,
    pub levels: usize,
    /// Relative change at the last refinement.
    pub last_change: f64,
}

/// Angular rule on the unit sphere `S^{d−1}`: directions and weights summing to `|S^{d−1}|`.
fn sphere_rule(d: usize, angular: usize) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::PI;
    match d {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => (0..angular)
            .map(|j| {
                let th = (j as f64 + 0.5) * 2.0 * PI / angular as f64;
                (vec![th.cos(), th.sin()], 2.0 * PI / angular as f64)
            })
            .collect(),
        3 => {
            let polar = gauss_legendre((angular / 2).max(2));
            let mut out = Vec::new();
            for (ct, wt) in polar {
                let st = (1.0 - ct * ct).sqrt();
                for j in 0..angular {
                    let ph = (j as f64 + 0.5) * 2.0 * PI / angular as f64;
                    out.push((vec![st * ph.cos(), st * ph.sin(), ct], wt * 2.0 * PI / angular as f64));
                }
            }
            out
        }
        _ => {
            // Fallback for d ≥ 4: Gaussian directions with equal weights.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let m = angular * angular;
            let area = 2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d);
            (0..m)
                .map(|_| {
                    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    (v, area / m as f64)
                })
                .collect()
        }
    }
}

/// `Γ(d/2)`.
fn gamma_half(d: usize) -> f64 {
    let mut g = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut k = if d % 2 == 0 { 1.0 } else { 0.5 };
    while k < d as f64 / 2.0 {
        g *= k;
        k += 1.0;
    }
    g
}

/// `L_d` norm of a scalar magnitude `g` over `B_R(center)` restricted to `g > λ`.
///
/// Shells `[R 2^{−j−1}, R 2^{−j}]` are added one at a time; convergence is
/// declared once the relative change from one shell drops below `tol`.
pub fn ld_norm_of(d: usize, lambda: f64, opts: &LdOptions, center: &[f64], g: impl Fn(&[f64]) -> f64) -> LdNorm {
    let sphere = sphere_rule(d, opts.angular);
    let mut x = vec![0.0; d];
    let mut shell_integral = |lo: f64, hi: f64| {
        let mut parts = Vec::new();
        for (r, wr) in gauss_legendre_on(opts.radial_order, lo, hi) {
            let jac = r.powi(d as i32 - 1) * wr;
            for (dir, wa) in &sphere {
                for i in 0..d {
                    x[i] = center[i] + r * dir[i];
                }
                let v = g(&x);
                if v > lambda {
                    parts.push(jac * wa * v.powi(d as i32));
                }
            }
        }
        pairwise_sum(&parts)
    };
    let mut total = 0.0;
    let mut last_change = f64::INFINITY;
    let mut hi = opts.radius;
    for level in 0..opts.max_levels {
        let lo = 0.5 * hi;
        let part = shell_integral(lo, hi);
        let before = total;
        total += part;
        hi = lo;
        if level >= 2 {
            last_change = if total > 0.0 { (total - before) / total } else { 0.0 };
            if last_change < opts.tol {
                return LdNorm { value: total.powf(1.0 / d as f64), converged: true, levels: level + 1, last_change };
            }
        }
    }
    LdNorm { value: total.powf(1.0 / d as f64), converged: false, levels: opts.max_levels, last_change }
}

/// `‖g I_{|g|>λ}‖_{L_d(B_R)}` for `g = b` or `g = σ^k_x`.
///
/// Without an analytic Jacobian, `σ_x` of a raw-singular field is taken by
/// differences with step proportional to the distance to the singular point.
pub fn ld_norm(field: &CoefficientField, component: LdComponent, lambda: f64, opts: &LdOptions) -> LdNorm {
    let d = field.dim();
    let center = opts
        .center
        .clone()
        .or_else(|| field.singular_points().first().cloned())
        .unwrap_or_else(|| vec![0.0; d]);
    match component {
        LdComponent::Drift => {
            if field.drift_free() {
                return LdNorm { value: 0.0, converged: true, levels: 0, last_change: 0.0 };
            }
            ld_norm_of(d, lambda, opts, &center, |x| field.drift(x).iter().map(|v| v * v).sum::<f64>().sqrt())
        }
        LdComponent::SigmaX(k) => ld_norm_of(d, lambda, opts, &center, |x| {
            let dist = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let step = match field.smoothness() {
                super::Smoothness::Mollified(n) => 0.1 / n as f64,
                _ => 1e-3 * dist.max(1e-300),
            };
            let jac = field.jacobian_with_step(x, step);
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let v = jac.dsigma[(i * field.noise_dim() + k) * d + j];
                    s += v * v;
                }
            }
            s.sqrt()
        }),
    }
}
