//! Order-deterministic ensemble statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quad::pairwise_sum;

/// SplitMix64 finalizer of `a ⊕ φ·b`: independent child seeds from a parent seed and an id.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error of the mean; summation order is the slice order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_err: f64::NAN, n };
        }
        let mean = pairwise_sum(values) / n as f64;
        if n == 1 {
            return Self { mean, std_err: 0.0, n };
        }
        let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self { mean, std_err: (var / n as f64).sqrt(), n }
    }

    pub fn variance(&self) -> f64 {
        self.std_err * self.std_err * self.n as f64
    }
}

/// Sample variance (unbiased) with its delta-method standard error.
pub fn variance_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let base = Estimate::from_samples(values);
    if n < 4 {
        return Estimate { mean: base.variance(), std_err: f64::NAN, n };
    }
    let mean = base.mean;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let est = Estimate::from_samples(&sq);
    Estimate { mean: est.mean * n as f64 / (n - 1) as f64, std_err: est.std_err, n }
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_err: f64,
}

/// Ordinary least squares fit `y ≈ intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_std_err = if x.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LineFit { slope, intercept, slope_std_err }
}

/// Percentile bootstrap interval for a statistic of per-sample rows.
///
/// `rows[i]` is the data contributed by sample `i`; `stat` maps a resampled
/// set of rows to a scalar.
pub fn bootstrap_interval<T, F>(rows: &[T], replicates: usize, level: f64, seed: u64, stat: F) -> (f64, f64)
where
    T: Clone,
    F: Fn(&[T]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(replicates);
    let mut sample = Vec::with_capacity(rows.len());
    for _ in 0..replicates {
        sample.clear();
        for _ in 0..rows.len() {
            sample.push(rows[rng.random_range(0..rows.len())].clone());
        }
        values.push(stat(&sample));
    }
    let alpha = 0.5 * (1.0 - level);
    (quantile(&values, alpha), quantile(&values, 1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 * v - 2.0).collect();
        let fit = linear_fit(&x, &y);
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept + 2.0).abs() < 1e-12);
    }
}
