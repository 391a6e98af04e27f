//! Penalty functional, approximate Ekeland points and multiplier extraction.
//!
//! For a reference solution `u_bar` and `eps > 0` the penalty is
//! `phi(u) = sqrt(dist(f(u), E)^2 + ((f0(u) - f0(u_bar) + eps)^+)^2)`.
//! Its approximate minimizers give the pair `(a, b)` whose limit as `eps -> 0`
//! is a Fritz John multiplier.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexSet, SetKind, VariationSample};
use crate::error::{FcError, Result};
use crate::numeric;
use crate::spaces::{SpaceDescriptor, RANK_TOL};

/// The problem `minimize f0(u) subject to f(u) in E`.
///
/// Evaluations are also requested at `base + step`; problems where `step` is
/// much smaller than `base` should override the offset methods so that
/// increments are computed without cancellation.
pub trait ConstrainedProblem: Send + Sync {
    fn name(&self) -> &str;
    fn control_space(&self) -> &SpaceDescriptor;
    fn state_space(&self) -> &SpaceDescriptor;
    fn target_set(&self) -> &ConvexSet;

    /// Admissible controls; `None` means the whole control space.
    fn admissible_set(&self) -> Option<&ConvexSet> {
        None
    }

    /// The local solution the multipliers are computed at.
    fn reference_point(&self) -> DVector<f64>;

    fn cost(&self, u: &DVector<f64>) -> f64;
    /// Gradient of the cost in dual coordinates.
    fn cost_gradient(&self, u: &DVector<f64>) -> DVector<f64>;
    fn constraint(&self, u: &DVector<f64>) -> DVector<f64>;
    fn constraint_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64>;

    fn cost_increment(&self, base: &DVector<f64>, step: &DVector<f64>) -> f64 {
        self.cost(&(base + step)) - self.cost(base)
    }

    fn constraint_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        self.constraint(&(base + step))
    }

    fn cost_gradient_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        self.cost_gradient(&(base + step))
    }

    fn constraint_jacobian_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DMatrix<f64> {
        self.constraint_jacobian(&(base + step))
    }

    /// Sampler of variation pairs at `at`. The default uses first-order
    /// variations along admissible directions in the unit ball.
    fn variations(&self, at: &DVector<f64>, count: usize, seed: u64) -> Vec<VariationSample> {
        linearized_variations(self, at, count, seed)
    }
}

/// `(grad f0 . v, f'(u) v)` for `count` admissible directions `v` with `|v| <= 1`.
pub fn linearized_variations<P: ConstrainedProblem + ?Sized>(
    p: &P,
    at: &DVector<f64>,
    count: usize,
    seed: u64,
) -> Vec<VariationSample> {
    let space = p.control_space();
    let dirs = match p.admissible_set() {
        Some(set) => set
            .tangent_cone_sample(at, count, seed)
            .unwrap_or_else(|_| vec![space.zeros(); count]),
        None => ConvexSet::whole(space.clone())
            .tangent_cone_sample(&space.zeros(), count, seed)
            .expect("origin lies in the whole space"),
    };
    let grad = p.cost_gradient(at);
    let jac = p.constraint_jacobian(at);
    dirs.into_iter()
        .map(|v| VariationSample {
            xi0: grad.dot(&v),
            xi: &jac * v,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub eps0: f64,
    /// Number of halvings; the schedule has `steps + 1` entries.
    pub steps: usize,
    pub max_iters: usize,
    /// Stop when `|grad phi^2|` falls below `grad_tol * eps^2`.
    pub grad_tol: f64,
    pub ekeland_tol: f64,
    pub ball_slack: f64,
    pub limit_tol: f64,
    pub z0_tol: f64,
    pub z_tol: f64,
    pub mono_slack: f64,
    pub tail_len: usize,
    pub solution_slack: f64,
    pub probe_count: usize,
    pub warm_start: bool,
    pub parallel: bool,
    pub seed: u64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            eps0: 0.1,
            steps: 14,
            max_iters: 500,
            grad_tol: 1e-24,
            ekeland_tol: 1e-8,
            ball_slack: 1e-8,
            limit_tol: 1e-3,
            z0_tol: 1e-4,
            z_tol: 1e-6,
            mono_slack: 1e-6,
            tail_len: 5,
            solution_slack: 1e-8,
            probe_count: 32,
            warm_start: true,
            parallel: false,
            seed: 7,
        }
    }
}

impl PenaltyConfig {
    pub fn schedule(&self) -> Result<Vec<f64>> {
        schedule(self.eps0, self.steps)
    }
}

/// `eps0 * 2^-k` for `k = 0..=steps`.
pub fn schedule(eps0: f64, steps: usize) -> Result<Vec<f64>> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(FcError::Config(format!("eps0 must lie in (0, 1), got {eps0}")));
    }
    Ok((0..=steps).map(|k| eps0 * 0.5f64.powi(k as i32)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierPair {
    pub z0: f64,
    #[serde(serialize_with = "numeric::coords")]
    pub z: DVector<f64>,
}

impl MultiplierPair {
    /// `sqrt(z0^2 + |z|^2)` with the dual norm of the state space.
    pub fn magnitude(&self, state: &SpaceDescriptor) -> f64 {
        (self.z0 * self.z0 + state.dual_norm(&self.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub eps: f64,
    #[serde(serialize_with = "numeric::coords")]
    pub u_eps: DVector<f64>,
    /// `u_eps - u_bar`, kept separately to avoid cancellation.
    #[serde(serialize_with = "numeric::coords")]
    pub displacement: DVector<f64>,
    pub phi: f64,
    pub a: f64,
    #[serde(serialize_with = "numeric::coords")]
    pub b: DVector<f64>,
    pub b_norm: f64,
    pub dist_val: f64,
    /// `f0(u_eps) - f0(u_bar) + eps`.
    pub f0_gap: f64,
    pub inner_iters: usize,
    pub ekeland_residual: f64,
    pub ball_radius: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PenaltyTrace {
    pub records: Vec<TraceRecord>,
}

impl PenaltyTrace {
    /// Largest `|a^2 + |b|^2 - 1|` over records with positive penalty.
    pub fn normalization_defect(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.phi > 0.0)
            .map(|r| (r.a * r.a + r.b_norm * r.b_norm - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Penalty components at a displacement from the reference point.
#[derive(Debug, Clone)]
struct PenaltyState {
    gap: f64,
    fx: DVector<f64>,
    proj: DVector<f64>,
    dist: f64,
    phi: f64,
    residual: DVector<f64>,
}

impl PenaltyState {
    fn objective(&self) -> f64 {
        0.5 * self.residual.norm_squared()
    }
}

fn evaluate<P: ConstrainedProblem + ?Sized>(p: &P, u_bar: &DVector<f64>, eps: f64, delta: &DVector<f64>) -> PenaltyState {
    let gap = p.cost_increment(u_bar, delta) + eps;
    let fx = p.constraint_at_offset(u_bar, delta);
    let set = p.target_set();
    let proj = set.project_unchecked(&fx);
    let diff = &fx - &proj;
    let x = p.state_space();
    let ed = x.to_euclidean(&diff);
    let dist = ed.norm();
    let gp = gap.max(0.0);
    let mut residual = DVector::zeros(ed.len() + 1);
    residual.rows_mut(0, ed.len()).copy_from(&ed);
    residual[ed.len()] = gp;
    let phi = dist.hypot(gp);
    PenaltyState {
        gap,
        fx,
        proj,
        dist,
        phi,
        residual,
    }
}

fn jacobian<P: ConstrainedProblem + ?Sized>(p: &P, u_bar: &DVector<f64>, delta: &DVector<f64>, st: &PenaltyState) -> DMatrix<f64> {
    let x = p.state_space();
    let jf = p.constraint_jacobian_at_offset(u_bar, delta);
    let dp = p
        .target_set()
        .projection_jacobian(&st.fx)
        .expect("state dimension already checked");
    let n = x.dim();
    let jx = x.factor().tr_mul(&((DMatrix::identity(n, n) - dp) * jf));
    let mut j = DMatrix::zeros(n + 1, delta.len());
    j.rows_mut(0, n).copy_from(&jx);
    if st.gap >= 0.0 {
        let g = p.cost_gradient_at_offset(u_bar, delta);
        j.row_mut(n).copy_from(&g.transpose());
    }
    j
}

/// `phi_eps(u)`; zero signals the degenerate branch.
pub fn penalty_value<P: ConstrainedProblem + ?Sized>(p: &P, u_bar: &DVector<f64>, eps: f64, u: &DVector<f64>) -> Result<f64> {
    p.control_space().check(u_bar)?;
    p.control_space().check(u)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FcError::Precondition(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(evaluate(p, u_bar, eps, &(u - u_bar)).phi)
}

/// An approximate minimizer of the penalty with a-posteriori checks.
#[derive(Debug, Clone, Serialize)]
pub struct EkelandPoint {
    #[serde(serialize_with = "numeric::coords")]
    pub u: DVector<f64>,
    #[serde(serialize_with = "numeric::coords")]
    pub displacement: DVector<f64>,
    pub phi: f64,
    pub iterations: usize,
    /// Max over probes of `phi(u_eps) - phi(u) - sqrt(eps) |u - u_eps|`.
    pub ekeland_residual: f64,
    pub ball_radius: f64,
    pub within_ball: bool,
    pub gradient_norm: f64,
}

/// Minimize `phi_eps^2` by Levenberg-Marquardt in the displacement from `u_bar`.
pub fn minimize_penalty<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    eps: f64,
    cfg: &PenaltyConfig,
) -> Result<EkelandPoint> {
    p.control_space().check(u_bar)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FcError::Precondition(format!("eps must lie in (0, 1), got {eps}")));
    }
    minimize_from(p, u_bar, eps, &[], cfg)
}

/// Starts from the best of the reference point and the given displacements.
fn minimize_from<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    eps: f64,
    starts: &[DVector<f64>],
    cfg: &PenaltyConfig,
) -> Result<EkelandPoint> {
    let v = p.control_space();
    let gv = v.gram();
    let admissible = p.admissible_set();
    let to_admissible = |d: DVector<f64>| match admissible {
        Some(set) => set.project_unchecked(&(u_bar + &d)) - u_bar,
        None => d,
    };
    let mut delta = v.zeros();
    let mut st = evaluate(p, u_bar, eps, &delta);
    for s in starts {
        let cand = to_admissible(s.clone());
        let cst = evaluate(p, u_bar, eps, &cand);
        if cst.objective() < st.objective() {
            delta = cand;
            st = cst;
        }
    }
    let gmax = gv.diagonal().amax();
    let mut mu: Option<f64> = None;
    let mut iterations = 0;
    let mut gradient_norm;
    let mut converged = false;
    loop {
        let j = jacobian(p, u_bar, &delta, &st);
        let g = j.tr_mul(&st.residual);
        gradient_norm = 2.0 * v.dual_norm(&g);
        let jn = j.norm();
        if gradient_norm <= cfg.grad_tol * eps * eps
            || gradient_norm <= 4.0 * f64::EPSILON * jn * st.residual.norm()
            || st.phi == 0.0
        {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        iterations += 1;
        let jtj = j.tr_mul(&j);
        let damping = mu.get_or_insert_with(|| 1e-3 * jtj.diagonal().amax().max(1e-300) / gmax);
        let mut accepted = false;
        while *damping < 1e300 {
            let system = &jtj + gv * *damping;
            let Some(chol) = system.cholesky() else {
                *damping *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let cand = to_admissible(&delta + &step);
            if (&cand - &delta).amax() <= f64::EPSILON * (delta.amax() + eps) * 1e-2 {
                break;
            }
            let cst = evaluate(p, u_bar, eps, &cand);
            if cst.objective() < st.objective() {
                delta = cand;
                st = cst;
                *damping = (*damping / 3.0).max(1e-300);
                accepted = true;
                break;
            }
            *damping *= 4.0;
        }
        if !accepted {
            // no strictly decreasing step at floating-point resolution
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(FcError::Convergence {
            iterations,
            best_value: st.phi,
            best_point: (u_bar + &delta).as_slice().to_vec(),
        });
    }
    let ekeland_residual = ekeland_probe(p, u_bar, eps, &delta, st.phi, cfg);
    let ball_radius = v.norm(&delta);
    Ok(EkelandPoint {
        u: u_bar + &delta,
        within_ball: ball_radius <= eps.sqrt() + cfg.ball_slack,
        displacement: delta,
        phi: st.phi,
        iterations,
        ekeland_residual,
        ball_radius,
        gradient_norm,
    })
}

fn ekeland_probe<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    eps: f64,
    delta: &DVector<f64>,
    phi: f64,
    cfg: &PenaltyConfig,
) -> f64 {
    let v = p.control_space();
    let n = v.dim();
    let mut dirs = Vec::with_capacity(2 * n + cfg.probe_count);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let e = &e / v.norm(&e);
        dirs.push(-&e);
        dirs.push(e);
    }
    let mut rng = numeric::rng(cfg.seed ^ 0x9e37_79b9);
    for _ in 0..cfg.probe_count {
        let g = numeric::gaussian_vector(&mut rng, n);
        let s = v.norm(&g);
        if s > 0.0 {
            dirs.push(g / s);
        }
    }
    let root = eps.sqrt();
    let admissible = p.admissible_set();
    let mut worst = f64::NEG_INFINITY;
    for d in &dirs {
        for k in 0..5 {
            let radius = root * 10f64.powi(-k);
            let mut cand = delta + d * radius;
            if let Some(set) = admissible {
                cand = set.project_unchecked(&(u_bar + &cand)) - u_bar;
            }
            let moved = v.norm(&(&cand - delta));
            let val = evaluate(p, u_bar, eps, &cand).phi;
            worst = worst.max(phi - val - root * moved);
        }
    }
    worst
}

fn multiplier_from_state(x: &SpaceDescriptor, st: &PenaltyState) -> Result<(f64, DVector<f64>)> {
    if !(st.phi > 0.0) {
        return Err(FcError::DegeneratePenalty(st.phi));
    }
    let a = st.gap.max(0.0) / st.phi;
    let b = if st.dist > 0.0 {
        // dist * psi / phi with psi = G (f - P f) / dist
        x.lower(&(&st.fx - &st.proj)) / st.phi
    } else {
        x.zeros()
    };
    Ok((a, b))
}

/// `(a, b)` at a point `u`.
pub fn multiplier_at<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    eps: f64,
    u: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    p.control_space().check(u)?;
    p.control_space().check(u_bar)?;
    let st = evaluate(p, u_bar, eps, &(u - u_bar));
    multiplier_from_state(p.state_space(), &st)
}

/// Sampled check that `u_bar` is feasible and locally optimal.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceCheck {
    pub infeasibility: f64,
    pub feasible_neighbors: usize,
    pub worst_improvement: f64,
}

pub fn verify_reference<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    cfg: &PenaltyConfig,
) -> Result<ReferenceCheck> {
    p.control_space().check(u_bar)?;
    let fx = p.constraint(u_bar);
    p.state_space().check(&fx)?;
    let set = p.target_set();
    let infeasibility = set.distance(&fx)?;
    if infeasibility > 1e-8 * (1.0 + p.state_space().norm(&fx)) {
        return Err(FcError::Precondition(format!(
            "reference point is infeasible (distance {infeasibility:e})"
        )));
    }
    let v = p.control_space();
    let mut rng = numeric::rng(cfg.seed);
    let mut feasible_neighbors = 0;
    let mut worst_improvement: f64 = 0.0;
    for _ in 0..256 {
        let g = numeric::gaussian_vector(&mut rng, v.dim());
        let g = &g / v.norm(&g).max(f64::MIN_POSITIVE);
        for radius in [1e-2, 1e-4] {
            let mut step = &g * radius;
            if let Some(dom) = p.admissible_set() {
                step = dom.project_unchecked(&(u_bar + &step)) - u_bar;
            }
            let f = p.constraint_at_offset(u_bar, &step);
            if set.project_unchecked(&f) == f || set.distance(&f)? <= 1e-12 {
                feasible_neighbors += 1;
                worst_improvement = worst_improvement.max(-p.cost_increment(u_bar, &step));
            }
        }
    }
    if worst_improvement > cfg.solution_slack {
        return Err(FcError::Precondition(format!(
            "a sampled feasible neighbor improves the cost by {worst_improvement:e}"
        )));
    }
    Ok(ReferenceCheck {
        infeasibility,
        feasible_neighbors,
        worst_improvement,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Extraction {
    pub pair: MultiplierPair,
    pub trace: PenaltyTrace,
    pub cauchy_gap: f64,
    pub converged: bool,
    pub reference: ReferenceCheck,
    pub warnings: Vec<String>,
}

/// Run the penalty schedule and take the final `(a, b)` as the multiplier.
pub fn extract_multiplier<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    schedule: &[f64],
    cfg: &PenaltyConfig,
) -> Result<Extraction> {
    if schedule.is_empty() {
        return Err(FcError::Precondition("empty eps schedule".into()));
    }
    if schedule.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FcError::Precondition(
            "eps schedule must be strictly decreasing within (0, 1)".into(),
        ));
    }
    let reference = verify_reference(p, u_bar, cfg)?;
    let x = p.state_space();
    let record = |eps: f64, pt: EkelandPoint| -> Result<TraceRecord> {
        let st = evaluate(p, u_bar, eps, &pt.displacement);
        let (a, b) = multiplier_from_state(x, &st)?;
        Ok(TraceRecord {
            eps,
            u_eps: pt.u,
            displacement: pt.displacement,
            phi: st.phi,
            a,
            b_norm: x.dual_norm(&b),
            b,
            dist_val: st.dist,
            f0_gap: st.gap,
            inner_iters: pt.iterations,
            ekeland_residual: pt.ekeland_residual,
            ball_radius: pt.ball_radius,
        })
    };
    let records: Vec<TraceRecord> = if cfg.parallel {
        schedule
            .par_iter()
            .map(|&eps| minimize_from(p, u_bar, eps, &[], cfg).and_then(|pt| record(eps, pt)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut out: Vec<TraceRecord> = Vec::with_capacity(schedule.len());
        for &eps in schedule {
            let starts = match out.last() {
                Some(prev) if cfg.warm_start => {
                    // previous point, and the same point rescaled to the new eps
                    vec![prev.displacement.clone(), &prev.displacement * (eps / prev.eps)]
                }
                _ => Vec::new(),
            };
            let pt = minimize_from(p, u_bar, eps, &starts, cfg)?;
            out.push(record(eps, pt)?);
        }
        out
    };
    let tail = &records[records.len().saturating_sub(3)..];
    let cauchy_gap = tail
        .windows(2)
        .map(|w| (w[1].a - w[0].a).abs().max(x.dual_norm(&(&w[1].b - &w[0].b))))
        .fold(0.0, f64::max);
    let converged = cauchy_gap <= cfg.limit_tol;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "multiplier sequence not settled: Cauchy gap {cauchy_gap:e} exceeds {:e}",
            cfg.limit_tol
        ));
    }
    for r in &records {
        if r.ekeland_residual > cfg.ekeland_tol {
            warnings.push(format!(
                "eps={:e}: Ekeland probe residual {:e} above tolerance",
                r.eps, r.ekeland_residual
            ));
        }
        if r.ball_radius > r.eps.sqrt() + cfg.ball_slack {
            warnings.push(format!("eps={:e}: point left the sqrt(eps) ball", r.eps));
        }
    }
    let last = records.last().expect("schedule is nonempty");
    let pair = MultiplierPair {
        z0: last.a,
        z: last.b.clone(),
    };
    Ok(Extraction {
        pair,
        trace: PenaltyTrace { records },
        cauchy_gap,
        converged,
        reference,
        warnings,
    })
}

/// `min over samples of z0 * xi0 + <z, xi>`.
pub fn fritz_john_residual(pair: &MultiplierPair, variations: &[VariationSample]) -> Result<f64> {
    if variations.is_empty() {
        return Err(FcError::Precondition("no variation samples".into()));
    }
    variations.iter().try_fold(f64::INFINITY, |acc, s| {
        if s.xi.len() != pair.z.len() {
            return Err(FcError::DimensionMismatch {
                expected: pair.z.len(),
                found: s.xi.len(),
            });
        }
        Ok(acc.min(pair.z0 * s.xi0 + pair.z.dot(&s.xi)))
    })
}

/// Smallest `a * xi0 + <b, xi>` over variations sampled at a trace point.
pub fn approximate_stationarity<P: ConstrainedProblem + ?Sized>(
    p: &P,
    record: &TraceRecord,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let samples = p.variations(&record.u_eps, count, seed);
    fritz_john_residual(
        &MultiplierPair {
            z0: record.a,
            z: record.b.clone(),
        },
        &samples,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub normal: bool,
    #[serde(serialize_with = "numeric::coords_opt")]
    pub z_tilde: Option<DVector<f64>>,
    /// Smallest singular value of the linearized constraint map on the
    /// directions transversal to the target set; infinite when there are none.
    #[serde(serialize_with = "numeric::serialize_f64")]
    pub surjectivity_sigma: f64,
}

pub fn kkt_check<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    pair: &MultiplierPair,
    cfg: &PenaltyConfig,
) -> Result<KktReport> {
    p.control_space().check(u_bar)?;
    p.state_space().check(&pair.z)?;
    let normal = pair.z0 > cfg.z0_tol;
    let z_tilde = normal.then(|| &pair.z / pair.z0);
    let x = p.state_space();
    let v = p.control_space();
    let n = x.dim();
    // Euclidean images of the directions spanned by E
    let span: DMatrix<f64> = match p.target_set().kind() {
        SetKind::Singleton(_) => DMatrix::zeros(n, 0),
        SetKind::Affine { basis, .. } => x.factor().tr_mul(basis),
        SetKind::Box { lo, hi } => {
            let cols: Vec<usize> = (0..n).filter(|&i| hi[i] > lo[i]).collect();
            let mut m = DMatrix::zeros(n, cols.len());
            for (c, &i) in cols.iter().enumerate() {
                m[(i, c)] = 1.0;
            }
            x.factor().tr_mul(&m)
        }
        SetKind::NonnegativeCone | SetKind::WholeSpace => DMatrix::identity(n, n),
    };
    let complement = orthogonal_complement(&span);
    let surjectivity_sigma = if complement.ncols() == 0 {
        f64::INFINITY
    } else {
        let jac = p.constraint_jacobian(u_bar);
        let j_euclid = x.factor().tr_mul(&jac);
        // right factor L_V^{-T}
        let reduced = complement.tr_mul(&j_euclid);
        let m = v
            .factor()
            .solve_lower_triangular(&reduced.transpose())
            .expect("cholesky factor has a positive diagonal")
            .transpose();
        let k = complement.ncols();
        if m.ncols() < k {
            0.0
        } else {
            let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let smax = s.first().copied().unwrap_or(0.0);
            let smin = s.get(k - 1).copied().unwrap_or(0.0);
            if smin <= RANK_TOL * smax {
                0.0
            } else {
                smin
            }
        }
    };
    Ok(KktReport {
        normal,
        z_tilde,
        surjectivity_sigma,
    })
}

/// Orthonormal basis of the Euclidean complement of the column span.
pub(crate) fn orthogonal_complement(span: &DMatrix<f64>) -> DMatrix<f64> {
    let n = span.nrows();
    if span.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let proj = {
        let gram = span.tr_mul(span);
        let pinv = gram
            .clone()
            .pseudo_inverse(1e-12 * gram.amax().max(f64::MIN_POSITIVE))
            .expect("pseudo-inverse with nonnegative tolerance");
        DMatrix::identity(n, n) - span * pinv * span.transpose()
    };
    let eig = proj.symmetric_eigen();
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(n, cols.len(), |i, c| eig.eigenvectors[(i, cols[c])])
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnhancedReport {
    pub tail_len: usize,
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
}

impl EnhancedReport {
    pub fn violations(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack) + f64::MIN_POSITIVE)
}

/// Checks along the trace tail that the infeasible approximating sequence
/// behaves as required when `z != 0`.
pub fn enhanced_sequence_report<P: ConstrainedProblem + ?Sized>(
    p: &P,
    u_bar: &DVector<f64>,
    trace: &PenaltyTrace,
    pair: &MultiplierPair,
    cfg: &PenaltyConfig,
) -> Result<EnhancedReport> {
    let x = p.state_space();
    let z_norm = x.dual_norm(&pair.z);
    if z_norm <= cfg.z_tol {
        return Err(FcError::Inapplicable(format!(
            "state multiplier vanishes (|z| = {z_norm:e}); the sequence conclusion needs z != 0"
        )));
    }
    let n = trace.records.len();
    if n == 0 {
        return Err(FcError::Precondition("empty trace".into()));
    }
    let tail = &trace.records[n.saturating_sub(cfg.tail_len)..];
    let f_bar = p.constraint(u_bar);
    let set = p.target_set();
    let mut dists = Vec::new();
    let mut cost_moves = Vec::new();
    let mut proj_moves = Vec::new();
    let mut pairings = Vec::new();
    for r in tail {
        let fx = p.constraint_at_offset(u_bar, &r.displacement);
        let proj = set.project_unchecked(&fx);
        dists.push(x.norm(&(&fx - &proj)));
        cost_moves.push((r.f0_gap - r.eps).abs());
        proj_moves.push(x.norm(&(&proj - &f_bar)));
        pairings.push(pair.z.dot(&(&fx - &proj)));
    }
    let last_eps = tail.last().map(|r| r.eps).unwrap_or(0.0);
    let fmt = |v: &[f64]| v.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(", ");
    let checks = vec![
        CheckOutcome {
            name: "infeasible".into(),
            passed: dists.iter().all(|d| *d > 0.0),
            detail: format!("dist(f(u), E) = [{}]", fmt(&dists)),
        },
        CheckOutcome {
            name: "distance_to_zero".into(),
            passed: decreasing(&dists, cfg.mono_slack),
            detail: format!("nonincreasing up to relative slack {:e}", cfg.mono_slack),
        },
        CheckOutcome {
            name: "cost_converges".into(),
            passed: decreasing(&cost_moves, cfg.mono_slack)
                && cost_moves.last().copied().unwrap_or(0.0) <= last_eps.sqrt(),
            detail: format!("|f0(u) - f0(u_bar)| = [{}]", fmt(&cost_moves)),
        },
        CheckOutcome {
            name: "projection_converges".into(),
            passed: decreasing(&proj_moves, cfg.mono_slack)
                && proj_moves.last().copied().unwrap_or(0.0) <= last_eps.sqrt(),
            detail: format!("|P f(u) - f(u_bar)| = [{}]", fmt(&proj_moves)),
        },
        CheckOutcome {
            name: "positive_pairing".into(),
            passed: pairings.iter().all(|v| *v > 0.0),
            detail: format!("<z, f(u) - P f(u)> = [{}]", fmt(&pairings)),
        },
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(EnhancedReport {
        tail_len: tail.len(),
        checks,
        all_passed,
    })
}
