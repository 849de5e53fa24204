//! Chaos kernels, the norm identity and the measurability criterion
//! remainders, integrated over ordered time tuples.

mod criterion;
mod kernel;
mod simplex;
mod tree;

pub use criterion::{
    classify, criterion_remainder, laplace_criterion, norm_identity_check, CriterionState, NormIdentityReport, Trend,
    DECAY_RATIO, PLATEAU_RATIO,
};
pub use kernel::{chaos_kernel, ChaosKernel};
pub use simplex::{graded, graded_rule, simplex_integrate, SimplexEstimate, SimplexMethod};
pub use tree::{chaos_series, laplace_series, ChaosSeries, HalfLineRule, LaplaceSeries, TreeOptions};
