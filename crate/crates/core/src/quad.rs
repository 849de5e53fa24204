//! Quadrature rules and summation helpers shared across modules.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::laguerre::GaussLaguerre;
use gauss_quad::legendre::GaussLegendre;

fn nz(n: usize) -> NonZeroUsize {
    NonZeroUsize::new(n.max(1)).expect("nonzero")
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(nz(n)).as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Rule for `E g(Z)` with `Z ~ N(0, 1)`.
pub fn gauss_hermite_normal(n: usize) -> Vec<(f64, f64)> {
    let norm = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = GaussHermite::new(nz(n))
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Rule for `∫_0^∞ e^{-s} g(s) ds`.
pub fn gauss_laguerre(n: usize) -> Vec<(f64, f64)> {
    let alpha = 0.0_f64.try_into().expect("alpha = 0 is admissible");
    let mut pairs: Vec<(f64, f64)> = GaussLaguerre::new(nz(n), alpha).as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Composite Gauss–Legendre integral of `g` over `[a, b]` with `panels` equal panels.
pub fn integrate_panels(a: f64, b: f64, panels: usize, order: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut parts = Vec::with_capacity(panels);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mut acc = 0.0;
        for &(x, w) in &rule {
            acc += w * g(lo + 0.5 * width * (x + 1.0));
        }
        parts.push(0.5 * width * acc);
    }
    pairwise_sum(&parts)
}

/// Pairwise (cascade) summation. The result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Radical inverse of `index` in the given base.
fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * factor;
        index /= b;
        factor *= inv;
    }
    out
}

/// Halton point `index` in `[0,1)^dim` (dimension at most 12).
pub fn halton(index: u64, dim: usize, out: &mut [f64]) {
    assert!(dim <= PRIMES.len(), "halton sequence supports at most 12 dimensions");
    for (j, slot) in out.iter_mut().take(dim).enumerate() {
        *slot = radical_inverse(index + 1, PRIMES[j]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let v: f64 = gauss_legendre_on(4, 0.0, 2.0).iter().map(|(x, w)| w * x.powi(7)).sum();
        assert!((v - 256.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite_normal(6);
        let m2: f64 = rule.iter().map(|(x, w)| w * x * x).sum();
        let m4: f64 = rule.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn laguerre_moments() {
        let rule = gauss_laguerre(8);
        let m3: f64 = rule.iter().map(|(x, w)| w * x.powi(3)).sum();
        assert!((m3 - 6.0).abs() < 1e-10);
    }

    #[test]
    fn halton_is_in_unit_cube() {
        let mut p = [0.0; 3];
        for i in 0..100 {
            halton(i, 3, &mut p);
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }
}
