//! Monte Carlo side: Wiener paths, Euler–Maruyama solvers, iterated Itô
//! integrals and pathwise chaos reconstruction.
//!
//! Ensembles are seeded per path from `(seed, path index)` and reduced by
//! pairwise summation in index order, so results do not depend on the
//! thread count.

mod ito;
mod path;
mod sde;

pub use ito::{
    chaos_reconstruct, conditional_series_estimate, iterated_ito_integral, ChaosTable, FnKernel, GradientLadder,
    TimeKernel, MIN_STEPS, TABLE_CAP,
};
pub use path::{refine_path, sample_wiener_path, WienerPath, MAX_LEVEL};
pub use sde::{
    coupled_solve, ensemble_map, euler_maruyama, feynman_kac_estimate, variational_solve, EnsembleOptions,
    EulerOptions, FeynmanKac, SdePath, VariationalPath, MAX_EXIT_FRACTION,
};
