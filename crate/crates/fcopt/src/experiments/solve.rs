use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};
use crate::problems::resolve_problem;
use crate::report::{Criterion, Outcome};

use super::multipliers::{pair_distance, run_pipeline};
use super::{Experiment, Thresholds};

pub(super) struct Solve;

impl Experiment for Solve {
    fn name(&self) -> &'static str {
        "solve"
    }

    fn summary(&self) -> &'static str {
        "penalty pipeline on a named problem or problem file (set `problem`)"
    }

    fn thresholds(&self) -> &'static [(&'static str, f64)] {
        &[
            ("normalization_max", 1e-9),
            ("fritz_john_min", -1e-6),
            ("multiplier_rel_max", 1e-4),
        ]
    }

    fn run(&self, cfg: &ExperimentConfig, th: &Thresholds) -> Result<Outcome> {
        let name = cfg
            .problem
            .as_deref()
            .ok_or_else(|| RunError::config("solve needs a problem name or file"))?;
        let built = resolve_problem(name, cfg)?;
        let run = run_pipeline(built.problem.as_ref(), &built.reference, cfg)?;
        let mut criteria = vec![
            Criterion::at_most("normalization", run.extraction.trace.normalization_defect(), th.get("normalization_max")),
            Criterion::at_least("fritz_john", run.fritz_john, th.get("fritz_john_min")),
        ];
        let mut oracle_gap = None;
        if let Some(oracle) = &built.oracle {
            let gap = pair_distance(&run.extraction.pair, oracle);
            criteria.push(Criterion::at_most("oracle_multiplier", gap, th.get("multiplier_rel_max")));
            oracle_gap = Some(gap);
        }
        let results = json!({
            "problem": built.problem.name(),
            "pipeline": run.to_json(),
            "oracle": built.oracle,
            "oracle_relative_gap": oracle_gap,
        });
        Ok(Outcome {
            results,
            criteria,
            tables: vec![run.trace_table()],
        })
    }
}
