use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default cap on `n_per_axis^d`.
pub const DEFAULT_POINT_CAP: usize = 4_000_000;

/// Uniform grid on `[−R, R]^d`, row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    d: usize,
    r_dom: f64,
    n: usize,
    h: f64,
    strides: Vec<usize>,
}

pub fn make_grid(d: usize, r_dom: f64, n_per_axis: usize) -> Result<Arc<Grid>> {
    make_grid_capped(d, r_dom, n_per_axis, DEFAULT_POINT_CAP)
}

pub fn make_grid_capped(d: usize, r_dom: f64, n_per_axis: usize, cap: usize) -> Result<Arc<Grid>> {
    if d == 0 || !(r_dom > 0.0) || !r_dom.is_finite() {
        return Err(Error::InvalidArgument(format!("grid needs d ≥ 1 and R > 0, got d = {d}, R = {r_dom}")));
    }
    if n_per_axis < 16 {
        return Err(Error::InvalidArgument(format!("n_per_axis = {n_per_axis} is below the minimum 16")));
    }
    let points = (n_per_axis as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if points > cap as u128 {
        return Err(Error::GridBudget { points: points.min(usize::MAX as u128) as usize, cap });
    }
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * n_per_axis;
    }
    Ok(Arc::new(Grid { d, r_dom, n: n_per_axis, h: 2.0 * r_dom / (n_per_axis - 1) as f64, strides }))
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn r_dom(&self) -> f64 {
        self.r_dom
    }
    pub fn n_per_axis(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.r_dom + i as f64 * self.h
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = idx / s;
            idx %= s;
        }
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = self.coord((idx / s) % self.n);
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.strides.iter().any(|s| {
            let i = (idx / s) % self.n;
            i == 0 || i == self.n - 1
        })
    }

    /// Points with some index equal to `1` or `n − 2`, excluding the boundary.
    pub fn is_boundary_adjacent(&self, idx: usize) -> bool {
        !self.is_boundary(idx)
            && self.strides.iter().any(|s| {
                let i = (idx / s) % self.n;
                i == 1 || i == self.n - 2
            })
    }

    /// Whether `x` lies in the inner half-box `[−R/2, R/2]^d`.
    pub fn in_inner_half_box(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= 0.5 * self.r_dom)
    }

    /// Multilinear interpolation weights at `x` (clamped to the box).
    pub fn interpolation_weights(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let d = self.d;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for i in 0..d {
            let s = ((x[i] + self.r_dom) / self.h).clamp(0.0, (self.n - 1) as f64);
            let mut j = s.floor() as usize;
            if j >= self.n - 1 {
                j = self.n - 2;
            }
            base[i] = j;
            frac[i] = s - j as f64;
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for i in 0..d {
                let up = (corner >> i) & 1;
                w *= if up == 1 { frac[i] } else { 1.0 - frac[i] };
                idx += (base[i] + up) * self.strides[i];
            }
            if w != 0.0 {
                out.push((idx, w));
            }
        }
        out
    }

    /// Index of the grid node at `x`, if `x` is a node to within `1e-9 h`.
    pub fn node_at(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.d {
            let s = (x[i] + self.r_dom) / self.h;
            let j = s.round();
            if (s - j).abs() > 1e-9 || j < 0.0 || j > (self.n - 1) as f64 {
                return None;
            }
            idx += j as usize * self.strides[i];
        }
        Some(idx)
    }
}

/// Real grid function.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("{} values for a grid of {} points", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at index {i}")));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    /// Samples `f` at every node.
    pub fn sample(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                f(&x)
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid.interpolation_weights(x).iter().map(|&(i, w)| w * self.values[i]).sum()
    }

    /// Largest magnitude on the boundary-adjacent layer.
    pub fn boundary_layer_max(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_boundary_adjacent(*i))
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Complex grid function (resolvent solves).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn real_part(&self) -> DiscreteField {
        DiscreteField { grid: self.grid.clone(), values: self.values.iter().map(|z| z.re).collect() }
    }

    pub fn imag_max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }
}
