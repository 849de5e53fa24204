//! Grid discretization of `L = ½ a^{ij} D_{ij} + b^i D_i` on `[−R, R]^d`
//! with zero Dirichlet data: semigroup, resolvent, contour semigroup and
//! the gradient channels `Q_t^k`.

mod cache;
mod evolve;
mod gradient;
mod grid;
pub mod io;
mod operator;
mod resolvent;
pub mod solver;
mod spectral;

pub use cache::{PointProbe, ProbeOptions, SemigroupCache, LADDER_RATIO};
pub use evolve::{evolve_semigroup, evolve_with_stops, EvolveStats, StepPolicy};
pub use gradient::{energy_density, gradient, q_operator, sigma_channels, sigma_contract};
pub use grid::{make_grid, make_grid_capped, ComplexField, DiscreteField, Grid, DEFAULT_POINT_CAP};
pub use operator::{OperatorContext, BOUNDARY_LEAK_THRESHOLD};
pub use resolvent::{
    contour_semigroup, resolvent_solve, resolvent_solve_with, ContourTable, DEFAULT_CONTOUR_NODES,
    IMAGINARY_TOLERANCE,
};

/// `assemble_generator` under its conventional name.
pub fn assemble_generator(
    field: &crate::fields::CoefficientField,
    grid: &std::sync::Arc<Grid>,
    lambda_grid: Option<f64>,
) -> crate::Result<OperatorContext> {
    OperatorContext::assemble(field, grid, lambda_grid)
}
