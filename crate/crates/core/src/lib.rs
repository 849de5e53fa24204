//! Numerical laboratory for strong solvability of SDEs with singular coefficients.
//!
//! The crate computes the diffusion semigroup `T_t` and the gradient
//! operators `Q_t^k f = σ^{ik} D_i T_t f` of `L = ½ a^{ij} D_{ij} + b^i D_i`
//! on a truncated grid, assembles Wiener-chaos kernels and the remainder
//! sequence `u_n(t₀)` whose limit decides strong measurability, and runs the
//! Monte Carlo side (Euler–Maruyama, iterated Itô integrals, Feynman–Kac).
//!
//! Modules:
//! - [`fields`]: coefficient fields, mollification, diagnostics.
//! - [`pde`]: grid operator, semigroup, resolvent, contour semigroup, `Q_t^k`.
//! - [`chaos`]: kernels, simplex quadrature, norm identity, criterion.
//! - [`mc`]: Wiener paths, SDE solvers, chaos reconstruction.
//! - [`oracle`]: closed-form evaluator for constant coefficients.

pub mod chaos;
pub mod error;
pub mod fields;
pub mod mc;
pub mod oracle;
pub mod pde;
pub mod quad;
pub mod stats;
pub mod testfn;

pub use error::{Error, Result};
