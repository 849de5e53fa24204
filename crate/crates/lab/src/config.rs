//! Experiment configuration, read from TOML.
//!
//! Every key except `experiment`, `seed`, `field` and `f` has a default.
//! Times are in the SDE's time units, lengths in its space units.

use std::path::Path;

use sdechaos::chaos::{TreeOptions, Trend};
use sdechaos::fields::FieldSpec;
use sdechaos::testfn::TestFunction;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form id echoed in reports.
    pub experiment: String,
    /// Master seed; there is no entropy default.
    pub seed: Option<u64>,
    /// Declared wall-clock budget in seconds, checked by the acceptance suite.
    #[serde(default = "default_budget")]
    pub budget_seconds: f64,
    /// Horizon `t` of the semigroup and of the paths.
    #[serde(default = "default_t")]
    pub t: f64,
    /// Starting point `x₀`.
    pub x0: Vec<f64>,
    /// Extra points for Feynman–Kac agreement; `x₀` is always included.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    pub field: FieldSpec,
    pub f: TestFunction,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub paths: PathConfig,
    #[serde(default)]
    pub chaos: ChaosConfig,
    #[serde(default)]
    pub criterion: CriterionConfig,
    #[serde(default)]
    pub uniqueness: UniquenessConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Checks to run; empty runs every check of the subcommand.
    #[serde(default)]
    pub checks: Vec<String>,
}

fn default_budget() -> f64 {
    600.0
}

fn default_t() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width `R` of the box `[−R, R]^d`.
    pub r_dom: f64,
    /// Points per axis, boundary included.
    pub n: usize,
    /// Drift cap; absent means `1/h`.
    pub lambda: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_dom: 4.0, n: 129, lambda: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Dyadic level: `2^level` steps over `[0, t]`.
    pub level: u32,
    pub n_paths: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { level: 7, n_paths: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    /// Largest reconstruction order `M`.
    pub order: usize,
    /// Depth `N_max` of the remainder sequence.
    pub depth: usize,
    /// Laplace weight `ν`; zero skips the Laplace variant.
    pub nu: f64,
    /// Left points of the kernel table; a half-size table gives the quadrature bar.
    pub table_nodes: usize,
    pub tree: TreeOptions,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self { order: 2, depth: 3, nu: 4.0, table_nodes: 128, tree: TreeOptions::default() }
    }
}

/// One starting point of the criterion run with its expected trend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub x0: Vec<f64>,
    pub expect: Option<Trend>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionConfig {
    /// Starting points; empty means `x₀` with no expectation.
    pub anchors: Vec<Anchor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessConfig {
    /// Mollification levels, increasing.
    pub ladder: Vec<u32>,
    /// Fixed field of the start-perturbation check `x(n) = x₀ + e₁/n` with
    /// `n` over `ladder`; absent skips the check.
    pub shift_field: Option<FieldSpec>,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self { ladder: vec![8, 16, 32], shift_field: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Moment of the spatial increments.
    pub kappa: f64,
    /// Moment of the time increments.
    pub q: f64,
    /// Separations `|x − y| = 2^{−k}` for `k` in this range.
    pub space_exponents: Vec<i32>,
    /// Lags `t 2^{−k}` for `k` in this range.
    pub time_exponents: Vec<i32>,
    /// Finite-difference steps of the variational check, decreasing.
    pub epsilons: Vec<f64>,
    pub bootstrap: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kappa: 12.0,
            q: 4.0,
            space_exponents: (2..=8).collect(),
            time_exponents: (1..=8).collect(),
            epsilons: vec![1e-2, 1e-3],
            bootstrap: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance of deterministic comparisons.
    pub relative: f64,
    /// Standard errors allowed in statistical comparisons.
    pub sigmas: f64,
    /// Relative budget of the energy identity.
    pub energy: f64,
    /// Pathwise agreement of duplicate solves.
    pub duplicate: f64,
    /// Target slope and half-width of the time regression.
    pub time_slope: f64,
    pub time_slope_band: f64,
    /// Exponent margin below `κ − 2d` of the spatial regression.
    pub space_margin: f64,
    /// Ratio thresholds confirming plateau and decay.
    pub plateau_ratio: f64,
    pub decay_ratio: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            relative: 2e-3,
            sigmas: 3.0,
            energy: 0.03,
            duplicate: 1e-12,
            time_slope: 2.0,
            time_slope_band: 0.2,
            space_margin: 1.0,
            plateau_ratio: 0.5,
            decay_ratio: 0.2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies a command-line seed and checks cross-references.
    pub fn finalize(mut self, seed: Option<u64>) -> Result<Self, LabError> {
        if let Some(s) = seed {
            self.seed = Some(s);
        }
        if self.seed.is_none() {
            return Err(LabError::Config("a seed is mandatory (config key `seed` or --seed)".into()));
        }
        let d = self.field.d;
        self.field.build().map_err(|e| LabError::Config(format!("field: {e}")))?;
        self.f.validate(d).map_err(|e| LabError::Config(format!("f: {e}")))?;
        let points = std::iter::once(&self.x0).chain(&self.probes).chain(self.criterion.anchors.iter().map(|a| &a.x0));
        for p in points {
            if p.len() != d {
                return Err(LabError::Config(format!("point {p:?} does not have dimension {d}")));
            }
        }
        if !(self.t > 0.0) {
            return Err(LabError::Config("t must be positive".into()));
        }
        if self.grid.n < 5 || self.grid.n % 2 == 0 {
            return Err(LabError::Config("grid.n must be odd and at least 5".into()));
        }
        if self.uniqueness.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Config("uniqueness.ladder must be increasing".into()));
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("finalized config has a seed")
    }

    /// Whether `check` is selected.
    pub fn wants(&self, check: &str) -> bool {
        self.checks.is_empty() || self.checks.iter().any(|c| c == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "demo"
seed = 3
x0 = [1.0, 0.0]
[field]
id = "constant-identity"
d = 2
[f]
kind = "gaussian"
center = [0.0, 0.0]
variance = 0.5
amplitude = 1.0
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap().finalize(None).unwrap();
        assert_eq!(c.seed(), 3);
        assert_eq!(c.grid, GridConfig::default());
        assert!(c.wants("anything"));
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace("seed = 3\n", "");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert!(c.clone().finalize(None).is_err());
        assert_eq!(c.finalize(Some(9)).unwrap().seed(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[grid]\nsize = 3\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let text = MINIMAL.replace("x0 = [1.0, 0.0]", "x0 = [1.0]");
        assert!(ExperimentConfig::from_toml(&text).unwrap().finalize(None).is_err());
    }
}
