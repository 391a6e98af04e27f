//! Estimate constants for adjoint operators and refinement sweeps over
//! operator families.
//!
//! Dual elements are identified with primal ones through the gram (Riesz)
//! map, so `|phi|_{X'}` and `|F* phi|_{V'}` become `|x|_X` and `|F^H x|_V`
//! for the Hilbert adjoint `F^H`. Every constant below is `1 / sigma` of
//! some operator in that geometry.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::error::{FcError, Result};
use crate::spaces::{rank_of, LinearMap, RANK_TOL};

/// An estimate constant, or the flag that no finite constant exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constant {
    Finite(f64),
    Infinite,
}

impl Constant {
    /// `1 / sigma`, infinite when `sigma <= tol * sigma_max`.
    pub fn from_sigma(sigma: f64, sigma_max: f64, tol: f64) -> Self {
        if sigma_max > 0.0 && sigma > tol * sigma_max {
            Constant::Finite(1.0 / sigma)
        } else {
            Constant::Infinite
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Constant::Finite(c) => *c,
            Constant::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Constant::Finite(_))
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Finite(c) => write!(f, "{c:.6e}"),
            Constant::Infinite => write!(f, "infinity"),
        }
    }
}

impl Serialize for Constant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Constant::Finite(c) => s.serialize_f64(*c),
            Constant::Infinite => s.serialize_str("infinity"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Growing,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Bounded => "bounded",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub constant: Constant,
    pub kernel_dim: usize,
    /// Singular values of the estimated operator, descending.
    pub sigma_profile: Vec<f64>,
}

impl EstimateReport {
    /// Estimate on the whole space of dimension `dim`; singular values the
    /// list does not reach count as zero.
    pub fn full(sigmas: Vec<f64>, dim: usize, tol: f64) -> Self {
        let rank = rank_of(&sigmas, tol);
        let kernel_dim = dim - rank.min(dim);
        let constant = if kernel_dim > 0 || rank == 0 {
            Constant::Infinite
        } else {
            Constant::Finite(1.0 / sigmas[rank - 1])
        };
        Self {
            constant,
            kernel_dim,
            sigma_profile: sigmas,
        }
    }

    /// Estimate on the orthogonal complement of the numerical kernel.
    pub fn restricted(sigmas: Vec<f64>, dim: usize, tol: f64) -> Self {
        let rank = rank_of(&sigmas, tol);
        let constant = if rank == 0 {
            Constant::Infinite
        } else {
            Constant::Finite(1.0 / sigmas[rank - 1])
        };
        Self {
            constant,
            kernel_dim: dim - rank.min(dim),
            sigma_profile: sigmas,
        }
    }
}

/// `dim ker(F*)`: the codomain dimension minus the numerical rank.
pub fn kernel_dimension(f: &LinearMap, tol: f64) -> usize {
    f.codomain().dim() - f.numerical_rank(tol).min(f.codomain().dim())
}

/// `|x| <= C |F* x|` on the complement of `ker(F*)`.
pub fn restricted_estimate_constant(f: &LinearMap) -> EstimateReport {
    EstimateReport::restricted(f.singular_values(), f.codomain().dim(), RANK_TOL)
}

/// Descending singular values of `[F*; G]` acting on the codomain of `F`.
fn stacked_sigmas(f: &LinearMap, g: &LinearMap) -> Result<Vec<f64>> {
    if !g.domain().same_as(f.codomain()) {
        return Err(FcError::DimensionMismatch {
            expected: f.codomain().dim(),
            found: g.domain().dim(),
        });
    }
    let top = f.adjoint().euclidean_matrix();
    let bottom = g.euclidean_matrix();
    let cols = top.ncols();
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    m.rows_mut(0, top.nrows()).copy_from(&top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Best `C` in `|x|^2 <= C^2 (|F* x|^2 + |G x|^2)`, with `G` defined on the
/// codomain of `F` and declared compact.
pub fn compact_perturbed_constant(f: &LinearMap, g: &LinearMap) -> Result<EstimateReport> {
    if !g.is_compact() {
        return Err(FcError::Precondition(
            "the perturbation must carry the compact flag".into(),
        ));
    }
    let sigmas = stacked_sigmas(f, g)?;
    Ok(EstimateReport::full(sigmas, f.codomain().dim(), RANK_TOL))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedRangeReport {
    /// Constant on the closure of the range of `F`.
    pub on_range: EstimateReport,
    /// Constant on the whole codomain with the projector onto the
    /// orthogonal complement of the range stacked under `F*`.
    pub with_projector: EstimateReport,
    pub range_dim: usize,
    /// `max / min` of the two constants.
    pub agreement: f64,
}

pub fn closed_range_constant(f: &LinearMap) -> Result<ClosedRangeReport> {
    let x = f.codomain();
    let n = x.dim();
    let trip = f.singular_triplets();
    let sigmas: Vec<f64> = trip.iter().map(|t| t.sigma).collect();
    let rank = rank_of(&sigmas, RANK_TOL);
    let on_range = EstimateReport {
        constant: if rank == 0 {
            Constant::Infinite
        } else {
            Constant::Finite(1.0 / sigmas[rank - 1])
        },
        kernel_dim: n - rank,
        sigma_profile: sigmas[..rank].to_vec(),
    };
    // X-orthogonal projector onto the complement: I - sum u_k u_k^T G_X
    let mut proj = DMatrix::identity(n, n);
    for t in &trip[..rank] {
        proj -= &t.left * x.lower(&t.left).transpose();
    }
    let pi = LinearMap::new(proj, x.clone(), x.clone())?;
    let with_projector = EstimateReport::full(stacked_sigmas(f, &pi)?, n, RANK_TOL);
    let (a, b) = (on_range.constant.value(), with_projector.constant.value());
    let agreement = if a.is_finite() && b.is_finite() {
        a.max(b) / a.min(b)
    } else if a.is_infinite() && b.is_infinite() {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(ClosedRangeReport {
        on_range,
        with_projector,
        range_dim: rank,
        agreement,
    })
}

/// Refinement levels `(n, F_n)` of one operator.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub description: String,
    pub levels: Vec<(usize, LinearMap)>,
}

impl OperatorFamily {
    pub fn new(description: impl Into<String>, levels: Vec<(usize, LinearMap)>) -> Result<Self> {
        if levels.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(FcError::Config("family levels must increase".into()));
        }
        Ok(Self {
            description: description.into(),
            levels,
        })
    }

    /// `diag(1, 1/2, ..., 1/n)` truncations.
    pub fn inverse_diagonal(sizes: &[usize]) -> Result<Self> {
        let levels = sizes
            .iter()
            .map(|&n| {
                let d = nalgebra::DVector::from_fn(n, |k, _| 1.0 / (k + 1) as f64);
                LinearMap::euclidean(DMatrix::from_diagonal(&d)).map(|m| (n, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new("diag(1/k), k = 1..n", levels)
    }

    pub fn identity(sizes: &[usize]) -> Result<Self> {
        let levels = sizes
            .iter()
            .map(|&n| LinearMap::euclidean(DMatrix::identity(n, n)).map(|m| (n, m)))
            .collect::<Result<Vec<_>>>()?;
        Self::new("identity", levels)
    }
}

/// Thresholds for classifying a sweep of constants.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthRule {
    /// Bounded when `max / min` stays within this factor.
    pub bound_factor: f64,
    /// Growing when each level-doubling multiplies the constant by at least this.
    pub growth_factor: f64,
}

impl Default for GrowthRule {
    fn default() -> Self {
        Self {
            bound_factor: 2.0,
            growth_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub n: usize,
    #[serde(flatten)]
    pub report: EstimateReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub description: String,
    pub levels: Vec<LevelReport>,
    pub verdict: Verdict,
    pub rule: GrowthRule,
    pub note: &'static str,
}

pub const HEURISTIC_NOTE: &str =
    "the verdict is a finite-dimensional heuristic over the sampled levels, not a proof";

/// Classify constants observed at increasing sizes.
///
/// A step counts as growth when the finite ratio reaches
/// `growth_factor^(log2(n_next / n))`, when a finite constant becomes
/// infinite, or when an infinite constant stays infinite while the kernel
/// dimension increases.
pub fn classify_growth(levels: &[LevelReport], rule: GrowthRule) -> Verdict {
    if levels.len() < 2 {
        return Verdict::Inconclusive;
    }
    let values: Vec<f64> = levels.iter().map(|l| l.report.constant.value()).collect();
    if values.iter().all(|v| v.is_finite()) {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if max <= rule.bound_factor * min {
            return Verdict::Bounded;
        }
    }
    let grows = levels.windows(2).all(|w| {
        let (a, b) = (&w[0].report, &w[1].report);
        match (a.constant, b.constant) {
            (Constant::Finite(x), Constant::Finite(y)) => {
                let need = rule.growth_factor.powf((w[1].n as f64 / w[0].n as f64).log2());
                y >= x * need * (1.0 - 1e-6)
            }
            (Constant::Finite(_), Constant::Infinite) => true,
            (Constant::Infinite, Constant::Infinite) => b.kernel_dim > a.kernel_dim,
            (Constant::Infinite, Constant::Finite(_)) => false,
        }
    });
    if grows {
        Verdict::Growing
    } else {
        Verdict::Inconclusive
    }
}

/// Per-level constants of a family and the growth verdict. Without a
/// perturbation builder the restricted constant is used; with one, the
/// compact-perturbed constant.
pub fn codim_growth_verdict(
    family: &OperatorFamily,
    perturbation: Option<&dyn Fn(usize, &LinearMap) -> Result<LinearMap>>,
    rule: GrowthRule,
) -> Result<SweepReport> {
    if family.levels.len() < 3 {
        return Err(FcError::Precondition("a sweep needs at least 3 levels".into()));
    }
    let levels = family
        .levels
        .iter()
        .map(|(n, f)| {
            let report = match perturbation {
                None => restricted_estimate_constant(f),
                Some(build) => compact_perturbed_constant(f, &build(*n, f)?)?,
            };
            Ok(LevelReport { n: *n, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = classify_growth(&levels, rule);
    Ok(SweepReport {
        description: family.description.clone(),
        levels,
        verdict,
        rule,
        note: HEURISTIC_NOTE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(n: usize, c: Constant, kernel_dim: usize) -> LevelReport {
        LevelReport {
            n,
            report: EstimateReport {
                constant: c,
                kernel_dim,
                sigma_profile: vec![],
            },
        }
    }

    #[test]
    fn constant_serializes_infinity_as_text() {
        let s = serde_json::to_string(&[Constant::Finite(2.0), Constant::Infinite]);
        assert_eq!(s.unwrap(), r#"[2.0,"infinity"]"#);
    }

    #[test]
    fn growth_classification() {
        use Constant::*;
        let rule = GrowthRule::default();
        let flat = [level(8, Finite(1.0), 0), level(16, Finite(1.5), 0), level(32, Finite(1.2), 0)];
        assert_eq!(classify_growth(&flat, rule), Verdict::Bounded);
        let lin = [level(8, Finite(8.0), 0), level(16, Finite(16.0), 0), level(32, Finite(32.0), 0)];
        assert_eq!(classify_growth(&lin, rule), Verdict::Growing);
        let blowup = [level(8, Finite(3.0), 0), level(16, Infinite, 1), level(32, Infinite, 4)];
        assert_eq!(classify_growth(&blowup, rule), Verdict::Growing);
        let stuck = [level(8, Infinite, 1), level(16, Infinite, 1), level(32, Infinite, 1)];
        assert_eq!(classify_growth(&stuck, rule), Verdict::Inconclusive);
        let back = [level(8, Infinite, 1), level(16, Finite(2.0), 0), level(32, Finite(9.0), 0)];
        assert_eq!(classify_growth(&back, rule), Verdict::Inconclusive);
    }
}
