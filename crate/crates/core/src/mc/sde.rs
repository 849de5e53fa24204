use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::WienerPath;
use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::stats::Estimate;
use crate::testfn::TestFunction;

/// Largest exit fraction tolerated when comparing against the truncated PDE.
pub const MAX_EXIT_FRACTION: f64 = 0.01;

/// Settings of the Euler–Maruyama scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerOptions {
    /// Componentwise drift cap, normally the `1/h` of the companion grid.
    pub lambda: f64,
    /// Paths leaving `[−half_box, half_box]^d` are flagged.
    pub half_box: f64,
    /// Accumulate coordinates and noise channels in reverse order.
    pub reverse_order: bool,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self { lambda: f64::INFINITY, half_box: f64::INFINITY, reverse_order: false }
    }
}

impl EulerOptions {
    /// Cap and exit box matching a grid on `[−r_dom, r_dom]^d` with spacing `h`.
    pub fn for_grid(r_dom: f64, h: f64) -> Self {
        Self { lambda: 1.0 / h, half_box: 0.5 * r_dom, reverse_order: false }
    }
}

/// Euler states `states[j * d + i] = x^i_{t_j}` on the path's time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub field: String,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub states: Vec<f64>,
    /// The drift cap was active at some step.
    pub clamped: bool,
    /// First step index at which the state left the half-box.
    pub exit_step: Option<usize>,
}

impl SdePath {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }
    pub fn steps(&self) -> usize {
        self.states.len() / self.dim() - 1
    }
    pub fn state(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.states[j * d..(j + 1) * d]
    }
    pub fn endpoint(&self) -> &[f64] {
        self.state(self.steps())
    }
    pub fn exited(&self) -> bool {
        self.exit_step.is_some()
    }
}

fn check_shapes(field: &CoefficientField, x0: &[f64], path: &WienerPath) -> Result<()> {
    if x0.len() != field.dim() {
        return Err(Error::InvalidArgument(format!("x0 has length {}, expected {}", x0.len(), field.dim())));
    }
    if path.noise_dim() != field.noise_dim() {
        return Err(Error::InvalidArgument(format!(
            "path has {} noise channels, field needs {}",
            path.noise_dim(),
            field.noise_dim()
        )));
    }
    Ok(())
}

/// One Euler step `x += σ(x) Δw + b(x) dt` into `out`; returns whether the cap was hit.
struct Stepper<'a> {
    field: &'a CoefficientField,
    opts: EulerOptions,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    dw: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(field: &'a CoefficientField, opts: EulerOptions) -> Self {
        let (d, d1) = (field.dim(), field.noise_dim());
        Self { field, opts, sigma: vec![0.0; d * d1], drift: vec![0.0; d], dw: vec![0.0; d1] }
    }

    fn step(&mut self, x: &[f64], path: &WienerPath, j: usize, out: &mut [f64]) -> bool {
        let (d, d1) = (self.field.dim(), self.field.noise_dim());
        let dt = path.dt();
        self.field.sigma_into(x, &mut self.sigma);
        self.field.drift_into(x, &mut self.drift);
        path.increments_into(j, &mut self.dw);
        let mut hit = false;
        for b in self.drift.iter_mut() {
            if b.abs() > self.opts.lambda {
                *b = b.signum() * self.opts.lambda;
                hit = true;
            }
        }
        let rev = self.opts.reverse_order;
        for ii in 0..d {
            let i = if rev { d - 1 - ii } else { ii };
            let mut acc = 0.0;
            for kk in 0..d1 {
                let k = if rev { d1 - 1 - kk } else { kk };
                acc += self.sigma[i * d1 + k] * self.dw[k];
            }
            out[i] = x[i] + acc + self.drift[i] * dt;
        }
        hit
    }
}

pub fn euler_maruyama(field: &CoefficientField, x0: &[f64], path: &WienerPath, opts: &EulerOptions) -> Result<SdePath> {
    check_shapes(field, x0, path)?;
    let d = field.dim();
    let n = path.steps();
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(x0);
    let mut stepper = Stepper::new(field, *opts);
    let mut clamped = false;
    let mut exit_step = None;
    let outside = |x: &[f64]| x.iter().any(|v| v.abs() > opts.half_box);
    if outside(x0) {
        exit_step = Some(0);
    }
    for j in 0..n {
        let (head, tail) = states.split_at_mut((j + 1) * d);
        let x = &head[j * d..];
        let next = &mut tail[..d];
        clamped |= stepper.step(x, path, j, next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Euler state at step {} of path {}", j + 1, path.index())));
        }
        if exit_step.is_none() && outside(next) {
            exit_step = Some(j + 1);
        }
    }
    Ok(SdePath { field: field.id().name().to_string(), x0: x0.to_vec(), dt: path.dt(), states, clamped, exit_step })
}

/// Solves every `(field, x0)` pair on the one shared noise realization.
pub fn coupled_solve(
    fields: &[&CoefficientField],
    x0s: &[Vec<f64>],
    path: &WienerPath,
    opts: &EulerOptions,
) -> Result<Vec<SdePath>> {
    if fields.len() != x0s.len() {
        return Err(Error::InvalidArgument("one starting point per field".into()));
    }
    if let Some(first) = fields.first() {
        if fields.iter().any(|f| f.dim() != first.dim() || f.noise_dim() != first.noise_dim()) {
            return Err(Error::InvalidArgument("coupled fields must share (d, d1)".into()));
        }
    }
    fields.iter().zip(x0s).map(|(f, x0)| euler_maruyama(f, x0, path, opts)).collect()
}

/// The derivative process `ξ_t = D_η x_t` along an Euler path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalPath {
    pub eta: Vec<f64>,
    /// `xi[j * d + i]`.
    pub xi: Vec<f64>,
    pub base: SdePath,
}

impl VariationalPath {
    pub fn at(&self, j: usize) -> &[f64] {
        let d = self.eta.len();
        &self.xi[j * d..(j + 1) * d]
    }
    pub fn endpoint(&self) -> &[f64] {
        self.at(self.base.steps())
    }
}

/// `ξ_{j+1} = ξ_j + σ_{(ξ_j)}(x_j) Δw_j + b_{(ξ_j)}(x_j) dt` alongside the Euler path.
///
/// Where the drift cap is active the capped component has zero derivative.
pub fn variational_solve(
    field: &CoefficientField,
    x0: &[f64],
    eta: &[f64],
    path: &WienerPath,
    opts: &EulerOptions,
) -> Result<VariationalPath> {
    let base = euler_maruyama(field, x0, path, opts)?;
    let (d, d1) = (field.dim(), field.noise_dim());
    if eta.len() != d {
        return Err(Error::InvalidArgument("direction must have length d".into()));
    }
    let n = path.steps();
    let dt = path.dt();
    let mut xi = vec![0.0; (n + 1) * d];
    xi[..d].copy_from_slice(eta);
    let mut dw = vec![0.0; d1];
    let mut ds = vec![0.0; d];
    let mut db = vec![0.0; d];
    for j in 0..n {
        let x = base.state(j);
        let jac = field.jacobian(x)?;
        let b = field.drift(x);
        path.increments_into(j, &mut dw);
        let (head, tail) = xi.split_at_mut((j + 1) * d);
        let cur = &head[j * d..];
        let next = &mut tail[..d];
        next.copy_from_slice(cur);
        for (k, w) in dw.iter().enumerate() {
            jac.sigma_along(k, cur, &mut ds);
            for i in 0..d {
                next[i] += ds[i] * w;
            }
        }
        jac.drift_along(cur, &mut db);
        for i in 0..d {
            if b[i].abs() <= opts.lambda {
                next[i] += db[i] * dt;
            }
        }
    }
    Ok(VariationalPath { eta: eta.to_vec(), xi, base })
}

/// Path level, seed and scheme settings of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    pub level: u32,
    pub seed: u64,
    pub euler: EulerOptions,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self { level: 8, seed: 0, euler: EulerOptions::default() }
    }
}

/// Runs `per_path` on every path of the ensemble, in index order.
pub fn ensemble_map<T: Send>(
    field: &CoefficientField,
    x0: &[f64],
    t: f64,
    n_paths: usize,
    opts: &EnsembleOptions,
    per_path: impl Fn(&WienerPath, &SdePath) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let w = WienerPath::sample(field.noise_dim(), t, opts.level, opts.seed, i as u64)?;
            let x = euler_maruyama(field, x0, &w, &opts.euler)?;
            per_path(&w, &x)
        })
        .collect()
}

/// `E f(x_t)` over Euler endpoints; exited paths are left out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKac {
    pub mean: f64,
    pub std_err: f64,
    pub n_paths: usize,
    pub exit_fraction: f64,
}

pub fn feynman_kac_estimate(
    field: &CoefficientField,
    f: &TestFunction,
    x0: &[f64],
    t: f64,
    n_paths: usize,
    opts: &EnsembleOptions,
) -> Result<FeynmanKac> {
    if n_paths < 100 {
        return Err(Error::InvalidArgument("Feynman–Kac needs at least 100 paths".into()));
    }
    f.validate(field.dim())?;
    let rows = ensemble_map(field, x0, t, n_paths, opts, |_, x| Ok((x.exited(), f.eval(x.endpoint()))))?;
    let kept: Vec<f64> = rows.iter().filter(|r| !r.0).map(|r| r.1).collect();
    let exit_fraction = (n_paths - kept.len()) as f64 / n_paths as f64;
    if exit_fraction > MAX_EXIT_FRACTION {
        return Err(Error::ExcessiveExits { fraction: exit_fraction, limit: MAX_EXIT_FRACTION });
    }
    let est = Estimate::from_samples(&kept);
    Ok(FeynmanKac { mean: est.mean, std_err: est.std_err, n_paths, exit_fraction })
}
