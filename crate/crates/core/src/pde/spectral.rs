//! Discrete sine transforms on the interior lattice.
//!
//! The Dirichlet second difference is diagonal in the sine basis, so
//! `α − β ½ Σ ā_ii D_ii` with constant `ā` inverts exactly in `O(N log N)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct SineBasis {
    d: usize,
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    /// `(4/h²) sin²(πk / 2(m+1))` for `k = 1..m`.
    eig: Vec<f64>,
}

impl fmt::Debug for SineBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineBasis").field("d", &self.d).field("m", &self.m).finish()
    }
}

impl SineBasis {
    /// Basis for `d` axes of `n` points (interior `m = n − 2`) and spacing `h`.
    pub fn new(d: usize, n: usize, h: f64) -> Self {
        let m = n - 2;
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        let eig = (1..=m)
            .map(|k| 4.0 / (h * h) * (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin().powi(2))
            .collect();
        Self { d, m, fft, eig }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Symbol of `½ Σ ā_ii D_ii` at every interior mode.
    pub fn symbols(&self, abar: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut idx = vec![0usize; self.d];
        for (q, o) in out.iter_mut().enumerate() {
            let mut r = q;
            for a in (0..self.d).rev() {
                idx[a] = r % self.m;
                r /= self.m;
            }
            *o = -0.5 * (0..self.d).map(|a| abar[a] * self.eig[idx[a]]).sum::<f64>();
        }
        out
    }

    /// `(2/(m+1))^d`: the inverse of two unnormalized transforms.
    pub fn normalization(&self) -> f64 {
        (2.0 / (self.m + 1) as f64).powi(self.d as i32)
    }

    /// Unnormalized DST-I along every axis, in place.
    pub fn transform(&self, data: &mut [f64]) {
        for axis in 0..self.d {
            self.transform_axis(data, axis);
        }
    }

    /// Two real lines share one complex FFT of the odd extension:
    /// `FFT(ext a + i ext b) = 2 S b − 2i S a`.
    fn transform_axis(&self, data: &mut [f64], axis: usize) {
        let m = self.m;
        let len = 2 * (m + 1);
        let stride = m.pow((self.d - 1 - axis) as u32);
        let lines = self.len() / m;
        let start = |l: usize| (l / stride) * stride * m + l % stride;
        let pairs = lines.div_ceil(2);
        let mut buf = vec![Complex64::default(); pairs * len];
        for (pair, chunk) in buf.chunks_mut(len).enumerate() {
            let (la, lb) = (2 * pair, 2 * pair + 1);
            let (sa, sb) = (start(la), if lb < lines { Some(start(lb)) } else { None });
            for j in 0..m {
                let a = data[sa + j * stride];
                let b = sb.map_or(0.0, |s| data[s + j * stride]);
                chunk[j + 1] = Complex64::new(a, b);
                chunk[len - 1 - j] = Complex64::new(-a, -b);
            }
        }
        let mut scratch = vec![Complex64::default(); self.fft.get_inplace_scratch_len()];
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        for (pair, chunk) in buf.chunks(len).enumerate() {
            let (la, lb) = (2 * pair, 2 * pair + 1);
            let sa = start(la);
            for j in 0..m {
                data[sa + j * stride] = -0.5 * chunk[j + 1].im;
            }
            if lb < lines {
                let sb = start(lb);
                for j in 0..m {
                    data[sb + j * stride] = 0.5 * chunk[j + 1].re;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_matches_direct_sum_and_inverts() {
        let b = SineBasis::new(2, 7, 0.1);
        let m = 5;
        let x: Vec<f64> = (0..m * m).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut y = x.clone();
        b.transform(&mut y);
        let pi = std::f64::consts::PI;
        for k1 in 0..m {
            for k2 in 0..m {
                let mut s = 0.0;
                for j1 in 0..m {
                    for j2 in 0..m {
                        s += x[j1 * m + j2]
                            * (pi * ((j1 + 1) * (k1 + 1)) as f64 / 6.0).sin()
                            * (pi * ((j2 + 1) * (k2 + 1)) as f64 / 6.0).sin();
                    }
                }
                assert!((y[k1 * m + k2] - s).abs() < 1e-10);
            }
        }
        b.transform(&mut y);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c * b.normalization()).abs() < 1e-10);
        }
    }
}
