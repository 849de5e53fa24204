//! Preconditioned Krylov solvers for `(α I − β L) u = r`.
//!
//! The default preconditioner inverts `α − β ½ Σ ā_ii D_ii` exactly with
//! sine transforms (`ā` the averaged diffusion); Jacobi is the fallback.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use super::operator::OperatorContext;
use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn conj(self) -> Self;
    fn abs2(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn from_parts(re: f64, im: f64) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    const COMPLEX: bool;
}

impl Scalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    const COMPLEX: bool = false;
}

impl Scalar for Complex64 {
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    const COMPLEX: bool = true;
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::default(), |acc, (x, y)| acc + x.conj() * *y)
}

fn norm<T: Scalar>(a: &[T]) -> f64 {
    a.iter().map(|x| x.abs2()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Preconditioner {
    Jacobi,
    #[default]
    SineTransform,
}

enum Precond<T> {
    Jacobi(Vec<T>),
    /// Inverse symbols per interior mode, already normalized.
    Sine { inv: Vec<T>, re: Vec<f64>, im: Vec<f64> },
}

/// The shifted system `A = α I − β L` (boundary rows are the identity).
pub struct Shifted<'a, T> {
    pub ctx: &'a OperatorContext,
    pub alpha: T,
    pub beta: T,
    pub transpose: bool,
    precond: Precond<T>,
    boundary: Vec<usize>,
    scratch: Vec<T>,
}

impl<'a, T: Scalar> Shifted<'a, T> {
    pub fn new(ctx: &'a OperatorContext, alpha: T, beta: T, transpose: bool) -> Self {
        Self::with_preconditioner(ctx, alpha, beta, transpose, Preconditioner::default())
    }

    pub fn with_preconditioner(
        ctx: &'a OperatorContext,
        alpha: T,
        beta: T,
        transpose: bool,
        kind: Preconditioner,
    ) -> Self {
        let n = ctx.grid().len();
        let precond = match kind {
            Preconditioner::Jacobi => {
                let diag = ctx.diagonal();
                let mut inv_diag = vec![T::from_real(1.0); n];
                for &p in ctx.interior() {
                    inv_diag[p] = T::from_real(1.0) / (alpha - beta * diag[p]);
                }
                Precond::Jacobi(inv_diag)
            }
            Preconditioner::SineTransform => {
                let sine = ctx.sine();
                let scale = sine.normalization();
                let inv = sine
                    .symbols(ctx.mean_diffusion())
                    .into_iter()
                    .map(|mu| T::from_real(scale) / (alpha - beta * mu))
                    .collect();
                let m = sine.len();
                Precond::Sine { inv, re: vec![0.0; m], im: vec![0.0; if T::COMPLEX { m } else { 0 }] }
            }
        };
        let scratch = vec![T::default(); n];
        let boundary = (0..n).filter(|&p| ctx.grid().is_boundary(p)).collect();
        Self { ctx, alpha, beta, transpose, precond, boundary, scratch }
    }

    pub fn apply(&mut self, x: &[T], y: &mut [T]) {
        self.ctx.apply_into(x, &mut self.scratch, self.transpose);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.alpha * x[i] - self.beta * self.scratch[i];
        }
        for &i in &self.boundary {
            y[i] = x[i];
        }
    }

    /// Zero Dirichlet data: boundary entries of iterates and right-hand sides vanish.
    fn clear_boundary(&self, v: &mut [T]) {
        for &i in &self.boundary {
            v[i] = T::default();
        }
    }

    fn precondition(&mut self, r: &[T], z: &mut [T]) {
        match &mut self.precond {
            Precond::Jacobi(inv_diag) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv_diag.iter()) {
                    *zi = *ri * *di;
                }
            }
            Precond::Sine { inv, re, im } => {
                let interior = self.ctx.interior();
                let sine = self.ctx.sine();
                for (q, &p) in interior.iter().enumerate() {
                    re[q] = r[p].re();
                }
                sine.transform(re);
                if T::COMPLEX {
                    for (q, &p) in interior.iter().enumerate() {
                        im[q] = r[p].im();
                    }
                    sine.transform(im);
                    for q in 0..re.len() {
                        let v = T::from_parts(re[q], im[q]) * inv[q];
                        re[q] = v.re();
                        im[q] = v.im();
                    }
                    sine.transform(im);
                } else {
                    for q in 0..re.len() {
                        re[q] = (T::from_real(re[q]) * inv[q]).re();
                    }
                }
                sine.transform(re);
                for &p in &self.boundary {
                    z[p] = r[p];
                }
                for (q, &p) in interior.iter().enumerate() {
                    z[p] = T::from_parts(re[q], if T::COMPLEX { im[q] } else { 0.0 });
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 5000;

/// Preconditioned conjugate gradients; `x` holds the initial guess.
pub fn cg(a: &mut Shifted<'_, f64>, b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
    let n = b.len();
    let mut b = b.to_vec();
    a.clear_boundary(&mut b);
    a.clear_boundary(x);
    let b = &b[..];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    a.precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    for it in 0..MAX_ITER {
        if res <= tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverDiverged { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        a.precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged { iterations: MAX_ITER, residual: res })
}

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess.
pub fn bicgstab<T: Scalar>(a: &mut Shifted<'_, T>, b: &[T], x: &mut [T], tol: f64) -> Result<SolveStats> {
    let n = b.len();
    let mut b = b.to_vec();
    a.clear_boundary(&mut b);
    a.clear_boundary(x);
    let b = &b[..];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = T::default());
        return Ok(SolveStats::default());
    }
    let mut r = vec![T::default(); n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let mut res = norm(&r) / bnorm;
    let one = T::from_real(1.0);
    let (mut rho, mut alpha, mut omega) = (one, one, one);
    let mut v = vec![T::default(); n];
    let mut p = vec![T::default(); n];
    let mut y = vec![T::default(); n];
    let mut s = vec![T::default(); n];
    let mut z = vec![T::default(); n];
    let mut t = vec![T::default(); n];
    let mut restarts = 0;
    let mut it = 0;
    while it < MAX_ITER {
        if res <= tol {
            return Ok(SolveStats { iterations: it, residual: res });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs2() < 1e-300 {
            // breakdown: restart from the current iterate
            restarts += 1;
            if restarts > 10 {
                break;
            }
            a.apply(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            rho = one;
            alpha = one;
            omega = one;
            p.iter_mut().for_each(|q| *q = T::default());
            v.iter_mut().for_each(|q| *q = T::default());
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.precondition(&p, &mut y);
        a.apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= tol {
            for i in 0..n {
                x[i] = x[i] + alpha * y[i];
            }
            return Ok(SolveStats { iterations: it + 1, residual: snorm });
        }
        a.precondition(&s, &mut z);
        a.apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] = x[i] + alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if !res.is_finite() {
            break;
        }
        it += 1;
    }
    Err(Error::SolverDiverged { iterations: it, residual: res })
}

/// Solve with CG when the system is symmetric (real only), BiCGSTAB otherwise.
pub fn solve_real(a: &mut Shifted<'_, f64>, b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
    if a.ctx.is_symmetric() {
        cg(a, b, x, tol)
    } else {
        bicgstab(a, b, x, tol)
    }
}
