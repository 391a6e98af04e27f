use fcopt_core::diagnostics::GrowthRule;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::families::resolve_sweep;
use crate::report::{num, Criterion, Outcome, Table};

use super::{Experiment, Thresholds};

pub(super) struct Diagnose;

const DEFAULT_LEVELS: [usize; 4] = [8, 16, 32, 64];

impl Experiment for Diagnose {
    fn name(&self) -> &'static str {
        "diagnose"
    }

    fn summary(&self) -> &'static str {
        "estimate constants over a refinement sweep of an operator family (set `family`)"
    }

    fn thresholds(&self) -> &'static [(&'static str, f64)] {
        &[("bound_factor", 2.0), ("growth_factor", 2.0)]
    }

    fn run(&self, cfg: &ExperimentConfig, th: &Thresholds) -> Result<Outcome> {
        let name = cfg
            .family
            .as_deref()
            .ok_or_else(|| RunError::config("diagnose needs a family name or file"))?;
        let levels = cfg.levels.clone().unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
        let rule = GrowthRule {
            bound_factor: th.get("bound_factor"),
            growth_factor: th.get("growth_factor"),
        };
        let (sweep, expected) = resolve_sweep(name, &levels, rule)?;
        let mut table = Table::new("sweep", &["n", "constant", "kernel_dim"]);
        for l in &sweep.levels {
            table.push(vec![l.n.to_string(), num(l.report.constant.value()), l.report.kernel_dim.to_string()]);
        }
        let criteria = expected
            .map(|v| {
                vec![Criterion::holds(
                    "verdict",
                    sweep.verdict == v,
                    format!("{} (expected {v})", sweep.verdict),
                )]
            })
            .unwrap_or_default();
        Ok(Outcome {
            results: json!({ "family": name, "sweep": sweep }),
            criteria,
            tables: vec![table],
        })
    }
}
