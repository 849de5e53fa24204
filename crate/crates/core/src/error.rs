use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported field `{id}` in dimension {d}")]
    UnsupportedField { id: String, d: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("derivative undefined for a raw-singular field")]
    RawSingular,

    #[error("grid of {points} points exceeds the budget of {cap} points")]
    GridBudget { points: usize, cap: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("imaginary residue {residue:.3e} above threshold {threshold:.3e}")]
    ImaginaryResidue { residue: f64, threshold: f64 },

    #[error("times are not strictly decreasing along the simplex")]
    SimplexOrder,

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("exit fraction {fraction:.4} exceeds the allowed {limit:.4}")]
    ExcessiveExits { fraction: f64, limit: f64 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
