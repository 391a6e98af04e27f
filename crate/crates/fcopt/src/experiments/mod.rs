//! Runtime registry of experiments, selected by name.

mod diagnose;
mod estimates;
mod multipliers;
mod solve;

use std::collections::BTreeMap;
use std::time::Instant;

use fcopt_core::diagnostics::{Constant, EstimateReport};

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::report::{table_paths, write_file, Outcome, RunReport, SCHEMA_VERSION};

pub use multipliers::pair_distance;

/// Resolved acceptance thresholds of one run.
#[derive(Debug, Clone)]
pub struct Thresholds(BTreeMap<String, f64>);

impl Thresholds {
    pub fn get(&self, name: &str) -> f64 {
        *self
            .0
            .get(name)
            .unwrap_or_else(|| panic!("threshold '{name}' is not declared by the experiment"))
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Declared thresholds with their defaults.
    fn thresholds(&self) -> &'static [(&'static str, f64)] {
        &[]
    }
    fn run(&self, cfg: &ExperimentConfig, th: &Thresholds) -> Result<Outcome>;
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(solve::Solve),
        Box::new(diagnose::Diagnose),
        Box::new(multipliers::L2FritzJohn),
        Box::new(multipliers::LqEndpointExample),
        Box::new(estimates::EllipticExample::l2()),
        Box::new(estimates::EllipticExample::h1()),
        Box::new(estimates::SdeRank),
        Box::new(estimates::SdeWitness),
        Box::new(estimates::WaveObservability),
    ]
}

/// Names and one-line descriptions of every registered experiment.
pub fn list_experiments() -> Vec<(&'static str, &'static str)> {
    registry().iter().map(|e| (e.name(), e.summary())).collect()
}

pub fn find(name: &str) -> Result<Box<dyn Experiment>> {
    registry()
        .into_iter()
        .find(|e| e.name() == name)
        .ok_or_else(|| RunError::Unknown {
            kind: "experiment",
            name: name.into(),
        })
}

fn resolve_thresholds(exp: &dyn Experiment, cfg: &ExperimentConfig) -> Result<Thresholds> {
    let mut map: BTreeMap<String, f64> = exp.thresholds().iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in &cfg.thresholds {
        match map.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(RunError::config(format!(
                    "experiment '{}' has no threshold '{k}'",
                    exp.name()
                )))
            }
        }
    }
    Ok(Thresholds(map))
}

/// Validate, dispatch, and write the JSON report and CSV tables when an
/// output path is configured.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let exp = find(&cfg.experiment)?;
    let th = resolve_thresholds(exp.as_ref(), cfg)?;
    let start = Instant::now();
    let outcome = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::config(format!("cannot start {n} threads: {e}")))?
            .install(|| exp.run(cfg, &th))?,
        None => exp.run(cfg, &th)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    let passed = outcome.criteria.iter().all(|c| c.passed);
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        experiment: exp.name().to_string(),
        inputs: cfg.clone(),
        thresholds: th.0.clone(),
        results: outcome.results,
        criteria: outcome.criteria,
        passed,
        tables: outcome.tables.iter().map(|t| t.name.clone()).collect(),
        wall_clock_seconds: elapsed,
        library_version: env!("CARGO_PKG_VERSION"),
    };
    if let Some(out) = &cfg.out {
        write_file(out, &report.to_json()?)?;
        for (t, path) in outcome.tables.iter().zip(table_paths(out, &outcome.tables)) {
            write_file(&path, &t.to_csv()?)?;
        }
    }
    Ok(report)
}

/// Whether a constant grows by `factor` from one level to the next. A
/// finite constant turning infinite counts as growth, and so does an
/// infinite one whose kernel keeps growing.
pub(crate) fn step_grows(prev: &EstimateReport, next: &EstimateReport, factor: f64) -> bool {
    match (prev.constant, next.constant) {
        (Constant::Finite(a), Constant::Finite(b)) => b >= factor * a,
        (Constant::Finite(_), Constant::Infinite) => true,
        (Constant::Infinite, Constant::Infinite) => next.kernel_dim > prev.kernel_dim,
        (Constant::Infinite, Constant::Finite(_)) => false,
    }
}

/// `max / min` of finite constants; infinite when any level has no constant.
pub(crate) fn spread(reports: &[&EstimateReport]) -> f64 {
    let v: Vec<f64> = reports.iter().map(|r| r.constant.value()).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}
