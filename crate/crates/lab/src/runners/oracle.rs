//! Closed-form reference values for constant coefficients; no verdicts.

use sdechaos::oracle::{GaussianOracle, Letter};

use crate::config::ExperimentConfig;
use crate::report::Report;
use crate::runners::criterion::{multi_indices, KERNEL_TUPLES};
use crate::setup;
use crate::LabError;

pub fn run(config: &ExperimentConfig) -> Result<Report, LabError> {
    let mut report = Report::new("oracle", config);
    let field = setup::field(config)?;
    let oracle = GaussianOracle::from_field(&field)?;
    let (t, g) = (config.t, &config.f);
    let d1 = field.noise_dim();
    let points: Vec<(String, &Vec<f64>)> = std::iter::once(("x0".to_string(), &config.x0))
        .chain(config.probes.iter().enumerate().map(|(i, p)| (format!("probe{}", i + 1), p)))
        .collect();
    for (label, x) in points {
        report.metric(format!("semigroup@{label}"), oracle.semigroup(g, t, x)?, None);
        report.metric(format!("variance@{label}"), oracle.variance(g, t, x)?, None);
        for k in 0..d1 {
            report.metric(format!("q{k}@{label}"), oracle.word(g, &[Letter::Q(k, t)], x)?, None);
        }
        for m in 1..=KERNEL_TUPLES.len() {
            for mi in multi_indices(m, d1) {
                let tag: String = mi.iter().map(|k| k.to_string()).collect();
                report.metric(format!("kernel-{tag}@{label}"), oracle.kernel(g, &mi, t, x)?, None);
            }
        }
        for n in 1..=config.chaos.depth {
            report.metric(format!("c{n}@{label}"), oracle.chaos_level(g, t, x, n)?, None);
            let u = oracle.remainder(g, t, x, n)?;
            report.metric(format!("u{n}@{label}"), u, None);
            report.point(format!("remainder@{label}"), n as f64, u, None);
            if config.chaos.nu > 0.0 {
                report.metric(format!("laplace{n}@{label}"), oracle.laplace(g, config.chaos.nu, x, n)?, None);
            }
        }
    }
    Ok(report)
}
