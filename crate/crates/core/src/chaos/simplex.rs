use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, halton, pairwise_sum};

/// Quadrature family for integrals over ordered time tuples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimplexMethod {
    TensorGl,
    /// Randomly shifted Halton points, three replicates.
    QuasiMc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexEstimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl SimplexEstimate {
    pub fn within(&self, tol: f64) -> bool {
        self.error <= tol * self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// Graded map `v = (1 − cos πu)/2` on `(0, 1)`, clustering at both ends.
pub fn graded(u: f64) -> (f64, f64) {
    (0.5 * (1.0 - (PI * u).cos()), 0.5 * PI * (PI * u).sin())
}

/// Gauss–Legendre rule pushed through [`graded`]: `(v_j, w_j)` with `Σ w_j h(v_j) ≈ ∫_0^1 h`.
pub fn graded_rule(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| {
            let u = 0.5 * (x + 1.0);
            let (v, dv) = graded(u);
            (v, 0.5 * w * dv)
        })
        .collect()
}

/// Maps unit-cube coordinates to gaps `s_1..s_n` with `Σ s < t0`; returns the Jacobian.
///
/// Ordered times `t_ℓ = t_{ℓ−1} v(u_ℓ)` starting from `t_0 = t0`, and
/// `s_ℓ = t_{ℓ−1} − t_ℓ`.
fn to_gaps(u: &[f64], t0: f64, gaps: &mut [f64]) -> f64 {
    let mut prev = t0;
    let mut jac = 1.0;
    for (s, &ui) in gaps.iter_mut().zip(u) {
        let (v, dv) = graded(ui);
        jac *= prev * dv;
        let next = prev * v;
        *s = prev - next;
        prev = next;
    }
    jac
}

/// `∫_{s_1+⋯+s_n<t0} g(s) ds` over the open simplex.
///
/// Tensor Gauss–Legendre estimates its error against a rule with half the
/// nodes per axis; quasi-Monte Carlo uses the spread of three replicates.
pub fn simplex_integrate(
    mut g: impl FnMut(&[f64]) -> f64,
    n: usize,
    t0: f64,
    method: SimplexMethod,
    budget: usize,
    seed: u64,
) -> Result<SimplexEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("simplex dimension must be ≥ 1".into()));
    }
    if budget < 100 {
        return Err(Error::InvalidArgument("simplex budget must be ≥ 100 evaluations".into()));
    }
    if !(t0 > 0.0) {
        return Err(Error::InvalidArgument("simplex size must be positive".into()));
    }
    let mut gaps = vec![0.0; n];
    match method {
        SimplexMethod::TensorGl => {
            let cost = |q: usize| q.pow(n as u32) + q.div_ceil(2).pow(n as u32);
            let mut q = 2;
            while cost(q + 1) <= budget && q < 64 {
                q += 1;
            }
            let mut tensor = |q: usize| {
                let rule = gauss_legendre(q);
                let mut parts = Vec::with_capacity(q.pow(n as u32));
                let mut idx = vec![0usize; n];
                let mut u = vec![0.0; n];
                loop {
                    let mut w = 1.0;
                    for (j, &i) in idx.iter().enumerate() {
                        u[j] = 0.5 * (rule[i].0 + 1.0);
                        w *= 0.5 * rule[i].1;
                    }
                    let jac = to_gaps(&u, t0, &mut gaps);
                    parts.push(w * jac * g(&gaps));
                    let mut j = 0;
                    loop {
                        if j == n {
                            return pairwise_sum(&parts);
                        }
                        idx[j] += 1;
                        if idx[j] < q {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                    }
                }
            };
            let fine = tensor(q);
            let coarse = tensor(q.div_ceil(2));
            Ok(SimplexEstimate { value: fine, error: (fine - coarse).abs(), evaluations: cost(q) })
        }
        SimplexMethod::QuasiMc => {
            let per = budget / 3;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut means = Vec::with_capacity(3);
            let mut h = vec![0.0; n];
            let mut u = vec![0.0; n];
            for _ in 0..3 {
                let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let mut parts = Vec::with_capacity(per);
                for i in 0..per {
                    halton(i as u64 + 1, n, &mut h);
                    for j in 0..n {
                        u[j] = (h[j] + shift[j]).fract();
                    }
                    let jac = to_gaps(&u, t0, &mut gaps);
                    parts.push(jac * g(&gaps));
                }
                means.push(pairwise_sum(&parts) / per as f64);
            }
            let mean = means.iter().sum::<f64>() / 3.0;
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 2.0;
            Ok(SimplexEstimate { value: mean, error: (var / 3.0).sqrt(), evaluations: 3 * per })
        }
    }
}
