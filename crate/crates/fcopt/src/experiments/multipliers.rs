use fcopt_core::control::evolution::{adjoint_evolution, maximum_principle_residual, BoxControls, QuadraticHamiltonian};
use fcopt_core::penalty::{
    enhanced_sequence_report, extract_multiplier, fritz_john_residual, kkt_check, ConstrainedProblem, EnhancedReport,
    Extraction, KktReport, MultiplierPair, PenaltyConfig,
};
use fcopt_core::problems::CubicDegenerate;
use fcopt_core::FcError;
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::problems::lq_instance;
use crate::report::{num, Criterion, Outcome, Table};

use super::{Experiment, Thresholds};

const VARIATION_SAMPLES: usize = 1000;

pub(super) fn penalty_config(cfg: &ExperimentConfig) -> PenaltyConfig {
    PenaltyConfig {
        eps0: cfg.eps0,
        steps: cfg.steps,
        seed: cfg.seed,
        parallel: cfg.parallel,
        ..PenaltyConfig::default()
    }
}

pub(super) struct PipelineRun {
    pub extraction: Extraction,
    pub fritz_john: f64,
    pub kkt: KktReport,
    pub enhanced: std::result::Result<EnhancedReport, String>,
}

/// Extraction followed by the Fritz John, KKT, and sequence checks at the
/// reference point.
pub(super) fn run_pipeline(p: &dyn ConstrainedProblem, reference: &DVector<f64>, cfg: &ExperimentConfig) -> Result<PipelineRun> {
    let pc = penalty_config(cfg);
    let extraction = extract_multiplier(p, reference, &pc.schedule()?, &pc)?;
    let samples = p.variations(reference, VARIATION_SAMPLES, cfg.seed);
    let fritz_john = fritz_john_residual(&extraction.pair, &samples)?;
    let kkt = kkt_check(p, reference, &extraction.pair, &pc)?;
    let enhanced = match enhanced_sequence_report(p, reference, &extraction.trace, &extraction.pair, &pc) {
        Ok(r) => Ok(r),
        Err(FcError::Inapplicable(msg)) => Err(msg),
        Err(e) => return Err(e.into()),
    };
    Ok(PipelineRun {
        extraction,
        fritz_john,
        kkt,
        enhanced,
    })
}

impl PipelineRun {
    pub fn to_json(&self) -> Value {
        json!({
            "pair": self.extraction.pair,
            "trace": self.extraction.trace,
            "cauchy_gap": num(self.extraction.cauchy_gap),
            "converged": self.extraction.converged,
            "reference_check": self.extraction.reference,
            "warnings": self.extraction.warnings,
            "normalization_defect": self.extraction.trace.normalization_defect(),
            "fritz_john_residual": self.fritz_john,
            "variation_samples": VARIATION_SAMPLES,
            "kkt": self.kkt,
            "enhanced": match &self.enhanced {
                Ok(r) => json!(r),
                Err(msg) => json!({ "inapplicable": msg }),
            },
        })
    }

    pub fn trace_table(&self) -> Table {
        let mut t = Table::new("trace", &["eps", "a", "|b|", "dist", "gap"]);
        for r in &self.extraction.trace.records {
            t.push(vec![num(r.eps), num(r.a), num(r.b_norm), num(r.dist_val), num(r.f0_gap)]);
        }
        t
    }
}

/// Relative distance between two pairs `(z0, z)` in coefficient space.
pub fn pair_distance(got: &MultiplierPair, want: &MultiplierPair) -> f64 {
    let stack = |p: &MultiplierPair| DVector::from_iterator(p.z.len() + 1, std::iter::once(p.z0).chain(p.z.iter().copied()));
    let (g, w) = (stack(got), stack(want));
    if g.len() != w.len() {
        return f64::INFINITY;
    }
    (&g - &w).norm() / w.norm()
}

pub(super) struct L2FritzJohn;

impl Experiment for L2FritzJohn {
    fn name(&self) -> &'static str {
        "l2-fritz-john"
    }

    fn summary(&self) -> &'static str {
        "sequence-space counterexample: Fritz John multipliers with a vanishing cost multiplier"
    }

    fn thresholds(&self) -> &'static [(&'static str, f64)] {
        &[
            ("z0_max", 1e-3),
            ("cosine_min", 0.999),
            ("fritz_john_min", -1e-6),
            ("normalization_max", 1e-9),
        ]
    }

    fn run(&self, cfg: &ExperimentConfig, th: &Thresholds) -> Result<Outcome> {
        let p = CubicDegenerate::new(cfg.dim)?;
        let reference = p.reference_point();
        let run = run_pipeline(&p, &reference, cfg)?;
        let pair = &run.extraction.pair;
        let mut dir = DVector::zeros(cfg.dim);
        dir[0] = std::f64::consts::FRAC_1_SQRT_2;
        dir[1] = std::f64::consts::FRAC_1_SQRT_2;
        let z_norm = pair.z.norm();
        let cosine = if z_norm > 0.0 { pair.z.dot(&dir).abs() / z_norm } else { 0.0 };
        let mut criteria = vec![
            Criterion::at_most("z0", pair.z0, th.get("z0_max")),
            Criterion::at_least("direction_cosine", cosine, th.get("cosine_min")),
            Criterion::holds(
                "kkt_not_normal",
                !run.kkt.normal,
                format!("normal = {}, surjectivity sigma = {:e}", run.kkt.normal, run.kkt.surjectivity_sigma),
            ),
            Criterion::at_least("fritz_john", run.fritz_john, th.get("fritz_john_min")),
            Criterion::at_most("normalization", run.extraction.trace.normalization_defect(), th.get("normalization_max")),
        ];
        criteria.push(match &run.enhanced {
            Ok(r) => Criterion::holds(
                "enhanced_tail",
                r.all_passed,
                if r.all_passed {
                    format!("all {} checks hold on the last {} records", r.checks.len(), r.tail_len)
                } else {
                    r.violations().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ")
                },
            ),
            Err(msg) => Criterion::holds("enhanced_tail", false, msg.clone()),
        });
        let results = json!({
            "dim": cfg.dim,
            "direction_cosine": cosine,
            "pipeline": run.to_json(),
        });
        Ok(Outcome {
            results,
            criteria,
            tables: vec![run.trace_table()],
        })
    }
}

pub(super) struct LqEndpointExample;

impl Experiment for LqEndpointExample {
    fn name(&self) -> &'static str {
        "lq-endpoint"
    }

    fn summary(&self) -> &'static str {
        "fixed-endpoint LQ control: pipeline multiplier against the dense KKT solve and the maximum principle"
    }

    fn thresholds(&self) -> &'static [(&'static str, f64)] {
        &[
            ("multiplier_rel_max", 1e-4),
            ("z0_min", 0.1),
            ("stationarity_max", 1e-6),
            ("normalization_max", 1e-9),
        ]
    }

    fn run(&self, cfg: &ExperimentConfig, th: &Thresholds) -> Result<Outcome> {
        let sol = lq_instance()?;
        let run = run_pipeline(&sol.problem, &sol.kkt.u, cfg)?;
        let pair = &run.extraction.pair;
        let gap = pair_distance(pair, &sol.kkt.pair);
        let adjoint = adjoint_evolution(&sol.system, pair.z0, &pair.z)?;
        let m = sol.system.control_dim();
        let hamiltonian = QuadraticHamiltonian {
            system: &sol.system,
            control_weight: DMatrix::identity(m, m),
            z0: pair.z0,
        };
        let controls = BoxControls {
            lo: DVector::from_element(m, -2.0),
            hi: DVector::from_element(m, 2.0),
        };
        let mp = maximum_principle_residual(&sol.system, pair, &adjoint, &hamiltonian, &sol.controls, &controls, 16, cfg.seed)?;
        let criteria = vec![
            Criterion::at_most("oracle_multiplier", gap, th.get("multiplier_rel_max")),
            Criterion::at_least("z0", pair.z0, th.get("z0_min")),
            Criterion::at_most("stationarity", mp.stationarity, th.get("stationarity_max")),
            Criterion::at_most("normalization", run.extraction.trace.normalization_defect(), th.get("normalization_max")),
        ];
        let results = json!({
            "state_dim": sol.system.state_dim(),
            "control_dim": m,
            "steps": sol.system.steps(),
            "oracle": sol.kkt.pair,
            "oracle_relative_gap": gap,
            "maximum_principle": mp,
            "pipeline": run.to_json(),
        });
        Ok(Outcome {
            results,
            criteria,
            tables: vec![run.trace_table()],
        })
    }
}
