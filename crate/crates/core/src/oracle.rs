//! Closed-form reference values for constant `σ` and `b`.
//!
//! With constant coefficients `T_t` is convolution with the Gaussian
//! `N(bt, ta)`, it commutes with every derivative, and any word
//! `Q^{k_n}_{s_n} ⋯ Q^{k_1}_{s_1} f` equals `(∏ σ^{k_j}·∇) T_{Σ s} f`.
//! Test functions in the Gaussian family stay polynomial-times-Gaussian under
//! these operations, so every quantity reduces to finite algebra plus
//! low-dimensional quadrature that is exact for polynomials.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::quad::{gauss_hermite_normal, gauss_legendre_on, pairwise_sum};
use crate::testfn::TestFunction;

/// `p(y) exp(−½ yᵀ P y)` with `y = x − c` and `p` a polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyGauss {
    center: Vec<f64>,
    prec: DMatrix<f64>,
    /// Monomial exponents to coefficients.
    poly: BTreeMap<Vec<u32>, f64>,
}

impl PolyGauss {
    pub fn gaussian(center: Vec<f64>, prec: DMatrix<f64>, amplitude: f64) -> Self {
        let d = center.len();
        let mut poly = BTreeMap::new();
        poly.insert(vec![0; d], amplitude);
        Self { center, prec, poly }
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn degree(&self) -> u32 {
        self.poly.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn eval_poly(&self, y: &[f64]) -> f64 {
        self.poly
            .iter()
            .map(|(e, c)| c * e.iter().zip(y).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let yv = DVector::from_column_slice(&y);
        let q = yv.dot(&(&self.prec * &yv));
        self.eval_poly(&y) * (-0.5 * q).exp()
    }

    /// Derivative along `v`: `∂_v(p e^q) = (∂_v p − p (v·P y)) e^q`.
    pub fn derivative(&self, v: &[f64]) -> Self {
        let d = self.dim();
        let pv = self.prec.transpose() * DVector::from_column_slice(v);
        let mut out: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, &c) in &self.poly {
            for i in 0..d {
                if v[i] != 0.0 && e[i] > 0 {
                    let mut e2 = e.clone();
                    e2[i] -= 1;
                    *out.entry(e2).or_default() += c * v[i] * e[i] as f64;
                }
                if pv[i] != 0.0 {
                    let mut e2 = e.clone();
                    e2[i] += 1;
                    *out.entry(e2).or_default() -= c * pv[i];
                }
            }
        }
        out.retain(|_, c| *c != 0.0);
        Self { center: self.center.clone(), prec: self.prec.clone(), poly: out }
    }

    pub fn square(&self) -> Self {
        let mut out: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e1, c1) in &self.poly {
            for (e2, c2) in &self.poly {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *out.entry(e).or_default() += c1 * c2;
            }
        }
        Self { center: self.center.clone(), prec: &self.prec * 2.0, poly: out }
    }

    /// `E h(x + bτ + σ W_τ)` for `h = self`, i.e. `(T_τ h)(x)` with `a = σσ*`.
    pub fn heat(&self, tau: f64, a: &DMatrix<f64>, b: &[f64], x: &[f64]) -> f64 {
        if tau == 0.0 {
            return self.eval(x);
        }
        let d = self.dim();
        let ta = a * tau;
        let ta_inv = ta.clone().try_inverse().expect("non-degenerate diffusion");
        let pi = &ta_inv + &self.prec;
        let pi_inv = pi.clone().try_inverse().expect("positive definite");
        let r = DVector::from_iterator(d, (0..d).map(|i| x[i] - self.center[i] + b[i] * tau));
        let pr = &self.prec * &r;
        let mu = -(&pi_inv * &pr);
        let expo = 0.5 * mu.dot(&(&pi * &mu)) - 0.5 * r.dot(&pr);
        let factor = (ta.determinant() * pi.determinant()).powf(-0.5) * expo.exp();
        // E p(r + Z), Z ~ N(μ, Π^{-1}), exact by tensor Gauss–Hermite.
        let chol = nalgebra::Cholesky::new(pi_inv).expect("positive definite").l();
        let order = (self.degree() / 2 + 1) as usize;
        let rule = gauss_hermite_normal(order);
        let total = order.pow(d as u32);
        let mut xi = vec![0.0; d];
        let mut parts = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for slot in xi.iter_mut() {
                let (node, weight) = rule[rem % order];
                rem /= order;
                *slot = node;
                w *= weight;
            }
            let z = &mu + &chol * DVector::from_column_slice(&xi);
            let y: Vec<f64> = (0..d).map(|i| r[i] + z[i]).collect();
            parts.push(w * self.eval_poly(&y));
        }
        factor * pairwise_sum(&parts)
    }
}

/// Gaussian `A exp(−½ (x−c)ᵀ C^{-1} (x−c))` followed by derivatives along `prefix`, scaled.
#[derive(Clone, Debug)]
struct Source {
    center: Vec<f64>,
    cov: DMatrix<f64>,
    amplitude: f64,
    prefix: Vec<Vec<f64>>,
}

/// Evaluator for constant `σ`, `b`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    d: usize,
    d1: usize,
    sigma: DMatrix<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
}

/// Operator letter: `T_s` or `Q^k_s` (zero-based `k`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Letter {
    T(f64),
    Q(usize, f64),
}

impl GaussianOracle {
    /// `sigma` is row-major `d × d1`.
    pub fn new(d: usize, d1: usize, sigma: &[f64], b: &[f64]) -> Result<Self> {
        if sigma.len() != d * d1 || b.len() != d {
            return Err(Error::InvalidArgument("oracle coefficient shapes".into()));
        }
        let s = DMatrix::from_row_slice(d, d1, sigma);
        let a = &s * s.transpose();
        if a.determinant() <= 0.0 {
            return Err(Error::InvalidArgument("oracle needs a non-degenerate diffusion".into()));
        }
        Ok(Self { d, d1, sigma: s, a, b: b.to_vec() })
    }

    /// Oracle for a field whose coefficients are constant (checked at a few points).
    pub fn from_field(field: &CoefficientField) -> Result<Self> {
        let d = field.dim();
        let x0 = vec![0.0; d];
        let (s0, b0) = (field.sigma(&x0), field.drift(&x0));
        for k in 0..4 {
            let x: Vec<f64> = (0..d).map(|i| (1.7 * (i + 1) as f64 + k as f64).sin() * 2.0).collect();
            let same = field.sigma(&x).iter().zip(&s0).all(|(u, v)| (u - v).abs() < 1e-14)
                && field.drift(&x).iter().zip(&b0).all(|(u, v)| (u - v).abs() < 1e-14);
            if !same {
                return Err(Error::InvalidArgument("oracle requires constant coefficients".into()));
            }
        }
        Self::new(d, field.noise_dim(), &s0, &b0)
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.a
    }

    fn column(&self, k: usize) -> Vec<f64> {
        (0..self.d).map(|i| self.sigma[(i, k)]).collect()
    }

    fn source(&self, f: &TestFunction) -> Result<Source> {
        f.validate(self.d)?;
        let d = self.d;
        match f {
            TestFunction::Gaussian { center, variance, amplitude } => Ok(Source {
                center: center.clone(),
                cov: DMatrix::identity(d, d) * *variance,
                amplitude: *amplitude,
                prefix: vec![],
            }),
            TestFunction::GaussianDensity { center, variance } => Ok(Source {
                center: center.clone(),
                cov: DMatrix::identity(d, d) * *variance,
                amplitude: (2.0 * std::f64::consts::PI * variance).powf(-0.5 * d as f64),
                prefix: vec![],
            }),
            TestFunction::OddGaussian { axis, variance, amplitude } => {
                // x^a e^{−|x|²/2s} = −s ∂_a e^{−|x|²/2s}
                let mut dir = vec![0.0; d];
                dir[*axis] = -variance;
                Ok(Source {
                    center: vec![0.0; d],
                    cov: DMatrix::identity(d, d) * *variance,
                    amplitude: *amplitude,
                    prefix: vec![dir],
                })
            }
            _ => Err(Error::InvalidArgument("oracle supports only the Gaussian family".into())),
        }
    }

    /// `(∏_{dirs} ∂) T_s f` as a polynomial-Gaussian.
    fn evolved(&self, f: &TestFunction, s: f64, dirs: &[Vec<f64>]) -> Result<PolyGauss> {
        let src = self.source(f)?;
        let cov = &src.cov + &self.a * s;
        let amp = src.amplitude * (src.cov.determinant() / cov.determinant()).sqrt();
        let center: Vec<f64> = src.center.iter().zip(&self.b).map(|(c, b)| c - b * s).collect();
        let prec = cov.try_inverse().expect("positive definite");
        let mut g = PolyGauss::gaussian(center, prec, amp);
        for v in src.prefix.iter().chain(dirs) {
            g = g.derivative(v);
        }
        Ok(g)
    }

    /// `T_t f(x)`.
    pub fn semigroup(&self, f: &TestFunction, t: f64, x: &[f64]) -> Result<f64> {
        if let TestFunction::Constant { value } = f {
            return Ok(*value);
        }
        Ok(self.evolved(f, t, &[])?.eval(x))
    }

    /// Word applied right to left: `letters[0]` acts first.
    pub fn word(&self, f: &TestFunction, letters: &[Letter], x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        let mut dirs = Vec::new();
        for l in letters {
            match *l {
                Letter::T(s) => total += s,
                Letter::Q(k, s) => {
                    if k >= self.d1 {
                        return Err(Error::InvalidArgument(format!("noise index {k} ≥ d1")));
                    }
                    total += s;
                    dirs.push(self.column(k));
                }
            }
        }
        Ok(self.evolved(f, total, &dirs)?.eval(x))
    }

    /// `(σ^{k_m}·∇ ⋯ σ^{k_1}·∇ T_t f)(x)`: the chaos kernel, independent of the time tuple.
    pub fn kernel(&self, f: &TestFunction, multi_index: &[usize], t: f64, x: &[f64]) -> Result<f64> {
        let dirs: Vec<Vec<f64>> = multi_index.iter().map(|&k| self.column(k)).collect();
        Ok(self.evolved(f, t, &dirs)?.eval(x))
    }

    fn multi_indices(&self, m: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..m {
            out = out
                .into_iter()
                .flat_map(|mi| {
                    (0..self.d1).map(move |k| {
                        let mut v = mi.clone();
                        v.push(k);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// `T_t f²(x) − (T_t f(x))²`.
    pub fn variance(&self, f: &TestFunction, t: f64, x: &[f64]) -> Result<f64> {
        let g = self.evolved(f, 0.0, &[])?;
        let second = g.square().heat(t, &self.a, &self.b, x);
        let first = g.heat(t, &self.a, &self.b, x);
        Ok(second - first * first)
    }

    /// `c_m = t^m/m! Σ_k kernel_k²`: the level-`m` chaos contribution.
    pub fn chaos_level(&self, f: &TestFunction, t: f64, x: &[f64], m: usize) -> Result<f64> {
        let mut s = 0.0;
        for mi in self.multi_indices(m) {
            let k = self.kernel(f, &mi, t, x)?;
            s += k * k;
        }
        Ok(s * t.powi(m as i32) / factorial(m))
    }

    /// `Σ_k T_τ[((∏D) T_{t−τ} f)²](x)` for words of length `n`.
    fn squared_channel(&self, f: &TestFunction, n: usize, t_inner: f64, tau: f64, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for mi in self.multi_indices(n) {
            let dirs: Vec<Vec<f64>> = mi.iter().map(|&k| self.column(k)).collect();
            let g = self.evolved(f, t_inner, &dirs)?;
            s += g.square().heat(tau, &self.a, &self.b, x);
        }
        Ok(s)
    }

    /// Criterion remainder `u_n(t)` at `x` (`n ≥ 1`).
    pub fn remainder(&self, f: &TestFunction, t: f64, x: &[f64], n: usize) -> Result<f64> {
        if n == 0 {
            return self.variance(f, t, x);
        }
        let nf = factorial(n - 1);
        let mut parts = Vec::new();
        for p in 0..16 {
            let (lo, hi) = (t * p as f64 / 16.0, t * (p + 1) as f64 / 16.0);
            for (tau, w) in gauss_legendre_on(12, lo, hi) {
                let v = self.squared_channel(f, n, t - tau, tau, x)?;
                parts.push(w * (t - tau).powi(n as i32 - 1) / nf * v);
            }
        }
        Ok(pairwise_sum(&parts))
    }

    /// `∫_0^∞ e^{−ν τ} T_τ[∫_0^∞ e^{−ν S} S^{n−1}/(n−1)! Σ_k ((∏D) T_S f)² dS](x) dτ`.
    pub fn laplace(&self, f: &TestFunction, nu: f64, x: &[f64], n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("Laplace criterion needs n ≥ 1".into()));
        }
        let nodes = half_line_rule(nu);
        let nf = factorial(n - 1);
        let mut parts = Vec::new();
        for &(s, ws) in &nodes {
            let weight_s = ws * (-nu * s).exp() * s.powi(n as i32 - 1) / nf;
            if weight_s == 0.0 {
                continue;
            }
            for &(tau, wt) in &nodes {
                let w = weight_s * wt * (-nu * tau).exp();
                if w == 0.0 {
                    continue;
                }
                parts.push(w * self.squared_channel(f, n, s, tau, x)?);
            }
        }
        Ok(pairwise_sum(&parts))
    }

    /// `(R_λ f)(x) = ∫_0^∞ e^{−λt} T_t f(x) dt` for real `λ > 0`.
    pub fn resolvent(&self, f: &TestFunction, lambda: f64, x: &[f64]) -> Result<f64> {
        let mut parts = Vec::new();
        for (t, w) in half_line_rule(lambda) {
            parts.push(w * (-lambda * t).exp() * self.semigroup(f, t, x)?);
        }
        Ok(pairwise_sum(&parts))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Composite Gauss–Legendre rule on `[0, 48/ν]`, graded toward 0.
fn half_line_rule(nu: f64) -> Vec<(f64, f64)> {
    let scale = 1.0 / nu;
    let breaks = [0.0, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0];
    breaks
        .windows(2)
        .flat_map(|w| gauss_legendre_on(16, w[0] * scale, w[1] * scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_panels;

    fn identity_oracle() -> GaussianOracle {
        GaussianOracle::new(2, 2, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap()
    }

    #[test]
    fn heat_of_density_adds_variance() {
        let o = identity_oracle();
        let f = TestFunction::GaussianDensity { center: vec![0.0, 0.0], variance: 0.25 };
        let g = TestFunction::GaussianDensity { center: vec![0.0, 0.0], variance: 0.75 };
        for x in [[0.0, 0.0], [0.3, -0.7]] {
            let a = o.semigroup(&f, 0.5, &x).unwrap();
            assert!((a - g.eval(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn heat_formula_matches_closed_form_for_gaussians() {
        let o = GaussianOracle::new(2, 2, &[1.2, 0.3, 0.0, 0.8], &[0.4, -0.2]).unwrap();
        let f = TestFunction::Gaussian { center: vec![0.2, 0.1], variance: 0.4, amplitude: 1.3 };
        let g = o.evolved(&f, 0.0, &[]).unwrap();
        let x = [0.5, -0.3];
        let a = g.heat(0.7, o.diffusion(), &o.b, &x);
        let b = o.semigroup(&f, 0.7, &x).unwrap();
        assert!((a - b).abs() < 1e-13 * b.abs());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let o = identity_oracle();
        let f = TestFunction::OddGaussian { axis: 0, variance: 0.5, amplitude: 1.0 };
        let g = o.evolved(&f, 0.3, &[vec![0.3, 1.0]]).unwrap();
        let h0 = o.evolved(&f, 0.3, &[]).unwrap();
        let x = [0.2, -0.4];
        let e = 1e-5;
        let fd = (h0.eval(&[x[0] + 0.3 * e, x[1] + e]) - h0.eval(&[x[0] - 0.3 * e, x[1] - e])) / (2.0 * e);
        assert!((g.eval(&x) - fd).abs() < 1e-8);
        assert!((h0.eval(&[0.0, 0.0])).abs() < 1e-15);
    }

    #[test]
    fn odd_gaussian_source_is_exact() {
        let o = identity_oracle();
        let f = TestFunction::OddGaussian { axis: 1, variance: 0.7, amplitude: 2.0 };
        let x = [0.3, -0.9];
        assert!((o.semigroup(&f, 0.0, &x).unwrap() - f.eval(&x)).abs() < 1e-14);
    }

    #[test]
    fn norm_identity_closes() {
        // Var = Σ_{m ≤ n} c_m + u_{n+1}
        let o = identity_oracle();
        let f = TestFunction::Gaussian { center: vec![0.3, 0.0], variance: 0.5, amplitude: 1.0 };
        let x = [0.0, 0.0];
        let t = 0.5;
        let var = o.variance(&f, t, &x).unwrap();
        for n in 0..3 {
            let head: f64 = (1..=n).map(|m| o.chaos_level(&f, t, &x, m).unwrap()).sum();
            let rest = o.remainder(&f, t, &x, n + 1).unwrap();
            assert!((head + rest - var).abs() < 1e-12 * var, "n={n}: {} vs {var}", head + rest);
        }
    }

    #[test]
    fn resolvent_of_one_dimensional_quadrature() {
        let o = identity_oracle();
        let f = TestFunction::gaussian(vec![0.0, 0.0], 0.5);
        let x = [0.1, 0.2];
        let lam = 4.0;
        let direct = integrate_panels(0.0, 20.0, 200, 10, |t| (-lam * t).exp() * o.semigroup(&f, t, &x).unwrap());
        let r = o.resolvent(&f, lam, &x).unwrap();
        assert!((r - direct).abs() < 1e-10 * direct);
    }
}
