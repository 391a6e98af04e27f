//! Named constrained problems for `solve`, plus quadratic problems read from file.

use std::path::Path;

use fcopt_core::control::evolution::{EvolutionSystem, LqEndpoint, LqSolution};
use fcopt_core::convex::ConvexSet;
use fcopt_core::penalty::{ConstrainedProblem, MultiplierPair};
use fcopt_core::problems::{CubicDegenerate, QuadraticProblem, ScalarIdentity};
use fcopt_core::spaces::{GramSpec, SpaceDescriptor};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};

/// A problem ready for the penalty pipeline.
pub struct BuiltProblem {
    pub problem: Box<dyn ConstrainedProblem>,
    pub reference: DVector<f64>,
    /// Multiplier from an independent dense solve, when one exists.
    pub oracle: Option<MultiplierPair>,
}

pub trait ProblemEntry: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn build(&self, cfg: &ExperimentConfig) -> Result<BuiltProblem>;
}

struct Cubic;

impl ProblemEntry for Cubic {
    fn name(&self) -> &'static str {
        "l2-cubic"
    }

    fn summary(&self) -> &'static str {
        "sequence-space problem with a degenerate cubic constraint (dimension from `dim`)"
    }

    fn build(&self, cfg: &ExperimentConfig) -> Result<BuiltProblem> {
        let p = CubicDegenerate::new(cfg.dim)?;
        let reference = p.reference_point();
        Ok(BuiltProblem {
            problem: Box::new(p),
            reference,
            oracle: None,
        })
    }
}

struct Scalar;

impl ProblemEntry for Scalar {
    fn name(&self) -> &'static str {
        "scalar"
    }

    fn summary(&self) -> &'static str {
        "minimize u subject to u = 0"
    }

    fn build(&self, _cfg: &ExperimentConfig) -> Result<BuiltProblem> {
        let p = ScalarIdentity::new();
        let reference = p.reference_point();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Ok(BuiltProblem {
            problem: Box::new(p),
            reference,
            oracle: Some(MultiplierPair {
                z0: s,
                z: DVector::from_element(1, -s),
            }),
        })
    }
}

struct Lq;

/// Fixed-endpoint LQ instance with `n = 4`, `m = 2`, 50 steps: two unit
/// oscillators with a weak spring between them, each forced on its velocity.
pub fn lq_instance() -> Result<LqSolution> {
    let (n, m, steps) = (4, 2, 50);
    #[rustfmt::skip]
    let drift = DMatrix::from_row_slice(n, n, &[
        0.0, 1.0, 0.0, 0.0,
        -1.0, 0.0, 0.5, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.5, 0.0, -1.0, 0.0,
    ]);
    #[rustfmt::skip]
    let input = DMatrix::from_row_slice(n, m, &[
        0.0, 0.0,
        1.0, 0.0,
        0.0, 0.0,
        0.0, 1.0,
    ]);
    let system = EvolutionSystem::time_invariant(1.0, steps, drift, input)?;
    Ok(LqEndpoint {
        system,
        state_weight: DMatrix::identity(n, n),
        control_weight: DMatrix::identity(m, m),
        initial: DVector::from_vec(vec![0.5, 0.0, -0.25, 0.125]),
        target: DVector::from_vec(vec![0.0, 0.25, 0.0, -0.25]),
    }
    .build()?)
}

impl ProblemEntry for Lq {
    fn name(&self) -> &'static str {
        "lq-endpoint"
    }

    fn summary(&self) -> &'static str {
        "linear-quadratic control with a fixed endpoint (coupled oscillators, n=4, m=2, 50 steps)"
    }

    fn build(&self, _cfg: &ExperimentConfig) -> Result<BuiltProblem> {
        let sol = lq_instance()?;
        Ok(BuiltProblem {
            reference: sol.kkt.u.clone(),
            oracle: Some(sol.kkt.pair.clone()),
            problem: Box::new(sol.problem),
        })
    }
}

pub fn problem_registry() -> Vec<Box<dyn ProblemEntry>> {
    vec![Box::new(Cubic), Box::new(Scalar), Box::new(Lq)]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSpec {
    kind: String,
    point: Option<Vec<f64>>,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
}

/// Quadratic cost `u^T H u / 2 + c^T u` with constraint `A u + y` in a target set.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: Option<String>,
    hessian: Vec<Vec<f64>>,
    linear: Vec<f64>,
    map: Vec<Vec<f64>>,
    offset: Option<Vec<f64>>,
    control_gram: Option<GramSpec>,
    state_gram: Option<GramSpec>,
    target: TargetSpec,
    /// Required unless the target is a single point.
    reference: Option<Vec<f64>>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || c == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(RunError::config(format!("{what} must be a nonempty rectangular row list")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn load_problem_file(path: &Path) -> Result<BuiltProblem> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |reason: String| RunError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let spec: ProblemFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.message().to_string()))?
    };
    let h = matrix(&spec.hessian, "hessian")?;
    let a = matrix(&spec.map, "map")?;
    let (n, m) = (h.nrows(), a.nrows());
    let control = SpaceDescriptor::from_spec("controls", n, spec.control_gram.as_ref().unwrap_or(&GramSpec::Identity))?;
    let state = SpaceDescriptor::from_spec("states", m, spec.state_gram.as_ref().unwrap_or(&GramSpec::Identity))?;
    let c = vector(&spec.linear);
    let y = spec.offset.as_deref().map(vector).unwrap_or_else(|| DVector::zeros(m));
    let name = spec.name.unwrap_or_else(|| "file".into());
    let t = &spec.target;
    let need = |v: &Option<Vec<f64>>, field: &str| {
        v.as_deref()
            .map(vector)
            .ok_or_else(|| RunError::config(format!("target kind '{}' needs '{field}'", t.kind)))
    };
    if t.kind == "singleton" && spec.reference.is_none() {
        let (p, sol) = QuadraticProblem::equality(name, control, state, h, c, a, y, need(&t.point, "point")?)?;
        return Ok(BuiltProblem {
            problem: Box::new(p),
            reference: sol.u,
            oracle: Some(sol.pair),
        });
    }
    let set = match t.kind.as_str() {
        "singleton" => ConvexSet::singleton(state.clone(), need(&t.point, "point")?)?,
        "origin" => ConvexSet::origin(state.clone()),
        "nonnegative" => ConvexSet::nonnegative(state.clone()),
        "box" => ConvexSet::boxed(state.clone(), need(&t.lo, "lo")?, need(&t.hi, "hi")?)?,
        "whole" => ConvexSet::whole(state.clone()),
        other => return Err(RunError::config(format!("unknown target kind '{other}'"))),
    };
    let reference = spec
        .reference
        .as_deref()
        .map(vector)
        .ok_or_else(|| RunError::config("problem file needs 'reference' for this target kind"))?;
    let p = QuadraticProblem::new(name, control, state, h, c, a, y, set, reference.clone())?;
    Ok(BuiltProblem {
        problem: Box::new(p),
        reference,
        oracle: None,
    })
}

/// Resolve a registry name, or load a problem file when the name is a path.
pub fn resolve_problem(name: &str, cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    if let Some(entry) = problem_registry().into_iter().find(|e| e.name() == name) {
        return entry.build(cfg);
    }
    let path = Path::new(name);
    if path.is_file() {
        return load_problem_file(path);
    }
    Err(RunError::Unknown {
        kind: "problem",
        name: name.into(),
    })
}
