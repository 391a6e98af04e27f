//! Closed convex sets in a gram-metrized space: projections, distances,
//! distance subgradients, sampled normal-cone checks and variation tools.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{check_len, FcError, Result};
use crate::numeric::{self, Halton};
use crate::spaces::SpaceDescriptor;

/// Number of points used to certify normal-cone membership.
pub const NORMAL_CONE_SAMPLES: usize = 10_000;
const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub enum SetKind {
    Singleton(DVector<f64>),
    NonnegativeCone,
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `offset + span(basis)`, basis columns orthonormal in the gram metric.
    Affine { basis: DMatrix<f64>, offset: DVector<f64> },
    WholeSpace,
}

#[derive(Debug, Clone)]
pub struct ConvexSet {
    kind: SetKind,
    space: SpaceDescriptor,
}

/// A pair `(xi0, xi)` of cost and state variations.
#[derive(Debug, Clone, Serialize)]
pub struct VariationSample {
    pub xi0: f64,
    #[serde(serialize_with = "numeric::coords")]
    pub xi: DVector<f64>,
}

impl ConvexSet {
    pub fn singleton(space: SpaceDescriptor, point: DVector<f64>) -> Result<Self> {
        space.check(&point)?;
        Ok(Self {
            kind: SetKind::Singleton(point),
            space,
        })
    }

    pub fn origin(space: SpaceDescriptor) -> Self {
        let point = space.zeros();
        Self {
            kind: SetKind::Singleton(point),
            space,
        }
    }

    pub fn nonnegative(space: SpaceDescriptor) -> Self {
        Self {
            kind: SetKind::NonnegativeCone,
            space,
        }
    }

    pub fn boxed(space: SpaceDescriptor, lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        space.check(&lo)?;
        space.check(&hi)?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h) || l.is_nan()) {
            return Err(FcError::Config("box bounds must satisfy lo <= hi".into()));
        }
        Ok(Self {
            kind: SetKind::Box { lo, hi },
            space,
        })
    }

    pub fn affine(space: SpaceDescriptor, basis: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        space.check(&offset)?;
        check_len(space.dim(), basis.nrows())?;
        let btgb = basis.transpose() * space.gram() * &basis;
        let k = basis.ncols();
        let dev = (btgb - DMatrix::<f64>::identity(k, k)).amax();
        if dev > 1e-10 {
            return Err(FcError::Config(format!(
                "affine basis is not orthonormal in the gram metric (deviation {dev:e})"
            )));
        }
        Ok(Self {
            kind: SetKind::Affine { basis, offset },
            space,
        })
    }

    pub fn whole(space: SpaceDescriptor) -> Self {
        Self {
            kind: SetKind::WholeSpace,
            space,
        }
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    /// Configuration name of the set kind.
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SetKind::Singleton(_) => "singleton",
            SetKind::NonnegativeCone => "nonneg",
            SetKind::Box { .. } => "box",
            SetKind::Affine { .. } => "affine",
            SetKind::WholeSpace => "whole",
        }
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.space.dim();
        match &self.kind {
            SetKind::NonnegativeCone => Some((DVector::zeros(n), DVector::from_element(n, f64::INFINITY))),
            SetKind::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            _ => None,
        }
    }

    /// Metric projection onto the set.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.space.check(x)?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SetKind::Singleton(p) => p.clone(),
            SetKind::WholeSpace => x.clone(),
            SetKind::Affine { basis, offset } => {
                let d = x - offset;
                offset + basis * (basis.transpose() * self.space.lower(&d))
            }
            SetKind::NonnegativeCone | SetKind::Box { .. } => {
                let (lo, hi) = self.bounds().expect("bounded kinds");
                if self.space.is_diagonal() {
                    clamp(x, &lo, &hi)
                } else {
                    box_qp(self.space.gram(), x, &lo, &hi).0
                }
            }
        }
    }

    /// Derivative of the projection at `x` (piecewise constant for polyhedral sets).
    pub fn projection_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.space.check(x)?;
        let n = self.space.dim();
        Ok(match &self.kind {
            SetKind::Singleton(_) => DMatrix::zeros(n, n),
            SetKind::WholeSpace => DMatrix::identity(n, n),
            SetKind::Affine { basis, .. } => basis * basis.transpose() * self.space.gram(),
            SetKind::NonnegativeCone | SetKind::Box { .. } => {
                let (lo, hi) = self.bounds().expect("bounded kinds");
                if self.space.is_diagonal() {
                    DMatrix::from_fn(n, n, |i, j| {
                        if i == j && x[i] > lo[i] && x[i] < hi[i] {
                            1.0
                        } else {
                            0.0
                        }
                    })
                } else {
                    let (_, state) = box_qp(self.space.gram(), x, &lo, &hi);
                    free_set_jacobian(self.space.gram(), &state)
                }
            }
        })
    }

    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        let p = self.project(x)?;
        Ok(self.space.norm(&(x - p)))
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol * (1.0 + self.space.norm(x)))
    }

    /// Selection of the distance subdifferential in dual coordinates:
    /// `G (x - P x) / |x - P x|` off the set, zero on it.
    pub fn dist_subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.project(x)?;
        let r = x - p;
        let d = self.space.norm(&r);
        if d == 0.0 {
            return Ok(self.space.zeros());
        }
        Ok(self.space.lower(&r) / d)
    }

    /// Largest sampled value of `<w, e' - e>` over points `e'` of the set.
    /// A value at most a small tolerance certifies that `w` lies in the
    /// normal cone at `e` on the sample.
    pub fn normal_cone_residual(&self, e: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        self.space.check(e)?;
        self.space.check(w)?;
        let miss = self.distance(e)?;
        if miss > MEMBERSHIP_TOL * (1.0 + self.space.norm(e)) {
            return Err(FcError::Precondition(format!(
                "base point is not in the set (distance {miss:e})"
            )));
        }
        let n = self.space.dim();
        let unit = |i: usize| {
            let mut v = DVector::zeros(n);
            v[i] = 1.0;
            let s = self.space.norm(&v);
            v / s
        };
        let mut best = f64::NEG_INFINITY;
        let mut consider = |cand: DVector<f64>| {
            let v = w.dot(&(cand - e));
            if v > best {
                best = v;
            }
        };
        let mut halton = Halton::new(n, 0);
        match &self.kind {
            SetKind::Singleton(p) => consider(p.clone()),
            SetKind::WholeSpace => {
                for i in 0..n {
                    consider(e + unit(i));
                    consider(e - unit(i));
                }
                for _ in 0..NORMAL_CONE_SAMPLES {
                    let h = halton.next_point().map(|t| 2.0 * t - 1.0);
                    let s = self.space.norm(&h).max(1.0);
                    consider(e + h / s);
                }
            }
            SetKind::Affine { basis, .. } => {
                for j in 0..basis.ncols() {
                    consider(e + basis.column(j));
                    consider(e - basis.column(j));
                }
                let k = basis.ncols();
                if k > 0 {
                    let mut hk = Halton::new(k, 0);
                    for _ in 0..NORMAL_CONE_SAMPLES {
                        let c = hk.next_point().map(|t| 2.0 * t - 1.0);
                        consider(e + basis * c);
                    }
                } else {
                    consider(e.clone());
                }
            }
            SetKind::NonnegativeCone => {
                consider(DVector::zeros(n));
                consider(e * 2.0);
                for i in 0..n {
                    consider(e + unit(i));
                    let mut z = e.clone();
                    z[i] = 0.0;
                    consider(z);
                }
                let radius = 1.0 + 2.0 * e.amax();
                for _ in 0..NORMAL_CONE_SAMPLES {
                    consider(halton.next_point() * radius);
                }
            }
            SetKind::Box { lo, hi } => {
                // exact maximizer of a linear functional over the box
                let vertex = DVector::from_fn(n, |i, _| {
                    if w[i] > 0.0 {
                        hi[i]
                    } else if w[i] < 0.0 {
                        lo[i]
                    } else {
                        e[i]
                    }
                });
                consider(vertex);
                for i in 0..n {
                    let mut a = e.clone();
                    a[i] = lo[i];
                    consider(a.clone());
                    a[i] = hi[i];
                    consider(a);
                }
                let span = hi - lo;
                for _ in 0..NORMAL_CONE_SAMPLES {
                    let h = halton.next_point();
                    consider(DVector::from_fn(n, |i, _| {
                        if span[i].is_finite() {
                            lo[i] + h[i] * span[i]
                        } else {
                            e[i]
                        }
                    }));
                }
            }
        }
        Ok(best)
    }

    /// Deterministic sample of radial-cone directions at `e`, capped to the
    /// unit ball.
    pub fn tangent_cone_sample(&self, e: &DVector<f64>, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        self.space.check(e)?;
        let miss = self.distance(e)?;
        if miss > MEMBERSHIP_TOL * (1.0 + self.space.norm(e)) {
            return Err(FcError::Precondition(format!(
                "base point is not in the set (distance {miss:e})"
            )));
        }
        let n = self.space.dim();
        let mut rng = numeric::rng(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let g = numeric::gaussian_vector(&mut rng, n);
            let radius: f64 = rng.random::<f64>();
            let d = match &self.kind {
                SetKind::WholeSpace => {
                    let s = self.space.norm(&g);
                    if s == 0.0 {
                        g
                    } else {
                        g * (radius.powf(1.0 / n as f64) / s)
                    }
                }
                _ => {
                    let target = self.project_unchecked(&(e + &g));
                    let d = target - e;
                    let s = self.space.norm(&d);
                    if s <= 1e-15 {
                        DVector::zeros(n)
                    } else {
                        d * (radius / s)
                    }
                }
            };
            out.push(d);
        }
        Ok(out)
    }
}

/// Worst-case angle (radians) from a probe direction to the nearest nonzero
/// sample, maximized over `probes` random unit directions. Small values mean
/// the samples cover all directions.
pub fn coverage_angle(space: &SpaceDescriptor, samples: &[DVector<f64>], probes: usize, seed: u64) -> f64 {
    let units: Vec<DVector<f64>> = samples
        .iter()
        .filter_map(|s| {
            let n = space.norm(s);
            (n > 0.0).then(|| s / n)
        })
        .collect();
    if units.is_empty() {
        return std::f64::consts::PI;
    }
    let mut rng = numeric::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let g = numeric::gaussian_vector(&mut rng, space.dim());
        let g = &g / space.norm(&g);
        let best_cos = units
            .iter()
            .map(|u| space.inner(u, &g))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(best_cos.clamp(-1.0, 1.0).acos());
    }
    worst
}

fn clamp(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| x[i].max(lo[i]).min(hi[i]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Primal active-set solve of `min (e-x)^T G (e-x)` over `lo <= e <= hi`.
fn box_qp(g: &DMatrix<f64>, x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> (DVector<f64>, Vec<Bound>) {
    let n = x.len();
    if (0..n).all(|i| x[i] >= lo[i] && x[i] <= hi[i]) {
        return (x.clone(), vec![Bound::Free; n]);
    }
    let mut e = clamp(x, lo, hi);
    let mut state: Vec<Bound> = (0..n)
        .map(|i| {
            if x[i] < lo[i] {
                Bound::Lower
            } else if x[i] > hi[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let gx = g * x;
    for _ in 0..(20 * n + 50) {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        let mut cand = e.clone();
        if !free.is_empty() {
            // G_FF e_F = (G x)_F - G_FA e_A
            let gff = DMatrix::from_fn(free.len(), free.len(), |a, b| g[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                gx[i] - (0..n).filter(|&j| state[j] != Bound::Free).map(|j| g[(i, j)] * e[j]).sum::<f64>()
            });
            let sol = gff.cholesky().map(|c| c.solve(&rhs)).unwrap_or(rhs);
            for (a, &i) in free.iter().enumerate() {
                cand[i] = sol[a];
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let step = cand[i] - e[i];
            if cand[i] < lo[i] && step < 0.0 {
                let a = (lo[i] - e[i]) / step;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Lower));
                }
            } else if cand[i] > hi[i] && step > 0.0 {
                let a = (hi[i] - e[i]) / step;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        if let Some((i, b)) = blocking {
            for &j in &free {
                e[j] += alpha.max(0.0) * (cand[j] - e[j]);
            }
            e[i] = if b == Bound::Lower { lo[i] } else { hi[i] };
            state[i] = b;
            continue;
        }
        e = cand;
        // multipliers of the active bounds: gradient G (e - x)
        let grad = g * (&e - x);
        let scale = 1e-13 * (1.0 + grad.amax());
        let mut worst = None;
        let mut worst_val = 0.0;
        for i in 0..n {
            let viol = match state[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => 0.0,
            };
            if viol > scale && viol > worst_val {
                worst_val = viol;
                worst = Some(i);
            }
        }
        match worst {
            Some(i) => state[i] = Bound::Free,
            None => break,
        }
    }
    (e, state)
}

fn free_set_jacobian(g: &DMatrix<f64>, state: &[Bound]) -> DMatrix<f64> {
    let n = state.len();
    let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
    let active: Vec<usize> = (0..n).filter(|&i| state[i] != Bound::Free).collect();
    let mut jac = DMatrix::zeros(n, n);
    if free.is_empty() {
        return jac;
    }
    let gff = DMatrix::from_fn(free.len(), free.len(), |a, b| g[(free[a], free[b])]);
    let gfa = DMatrix::from_fn(free.len(), active.len(), |a, b| g[(free[a], active[b])]);
    let coupling = gff.cholesky().map(|c| c.solve(&gfa)).unwrap_or(gfa);
    for (a, &i) in free.iter().enumerate() {
        jac[(i, i)] = 1.0;
        for (b, &j) in active.iter().enumerate() {
            jac[(i, j)] = coupling[(a, b)];
        }
    }
    jac
}

/// Difference-quotient estimate of a variation along a direction.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionalVariation {
    /// Quotient at the smallest step.
    #[serde(serialize_with = "numeric::coords")]
    pub xi: DVector<f64>,
    /// Richardson-style estimate of the remaining first-order error.
    pub error_estimate: f64,
    #[serde(serialize_with = "numeric::coords_list")]
    pub quotients: Vec<DVector<f64>>,
    pub warning: Option<String>,
}

/// `(f(e + h v) - f(e)) / h` along a decreasing step schedule.
pub fn directional_variation<F>(
    fmap: F,
    space: &SpaceDescriptor,
    e: &DVector<f64>,
    v: &DVector<f64>,
    h_schedule: &[f64],
) -> Result<DirectionalVariation>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    space.check(e)?;
    space.check(v)?;
    if space.norm(v) > 1.0 + 1e-12 {
        return Err(FcError::Precondition("direction must lie in the unit ball".into()));
    }
    if h_schedule.is_empty() || h_schedule.iter().any(|h| !(*h > 0.0)) {
        return Err(FcError::Precondition("step schedule must be nonempty and positive".into()));
    }
    if h_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FcError::Precondition("step schedule must be strictly decreasing".into()));
    }
    let base = fmap(e);
    let quotients: Vec<DVector<f64>> = h_schedule
        .iter()
        .map(|&h| (fmap(&(e + v * h)) - &base) / h)
        .collect();
    let k = quotients.len();
    let xi = quotients[k - 1].clone();
    let mut error_estimate = 0.0;
    let mut warning = None;
    if k >= 2 {
        let r = h_schedule[k - 2] / h_schedule[k - 1];
        let last = (&quotients[k - 1] - &quotients[k - 2]).amax();
        error_estimate = last / (r - 1.0);
        if k >= 3 {
            let prev = (&quotients[k - 2] - &quotients[k - 3]).amax();
            let r_prev = h_schedule[k - 3] / h_schedule[k - 2];
            // first-order convergence shrinks successive differences by the step ratio
            let predicted = prev / r_prev;
            let floor = 1e-12 * (1.0 + xi.amax());
            if last > 10.0 * predicted.max(floor) {
                warning = Some(format!(
                    "difference quotients not converging (last change {last:e}, predicted {predicted:e}); \
                     direction may be non-differentiable"
                ));
            }
        }
    }
    Ok(DirectionalVariation {
        xi,
        error_estimate,
        quotients,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: usize) -> SpaceDescriptor {
        SpaceDescriptor::identity("R", n).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn cone_and_singleton_projection() {
        let cone = ConvexSet::nonnegative(r(2));
        assert_eq!(cone.project(&v(&[-1.0, 2.0])).unwrap(), v(&[0.0, 2.0]));
        let zero = ConvexSet::origin(r(2));
        assert_eq!(zero.project(&v(&[3.0, 4.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(zero.distance(&v(&[3.0, 4.0])).unwrap(), 5.0);
        let sub = zero.dist_subgradient(&v(&[3.0, 4.0])).unwrap();
        assert!((sub - v(&[0.6, 0.8])).amax() < 1e-15);
    }

    #[test]
    fn cone_distance_and_subgradient() {
        let cone = ConvexSet::nonnegative(r(3));
        assert!((cone.distance(&v(&[-1.0, -2.0, 3.0])).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        let cone2 = ConvexSet::nonnegative(r(2));
        assert_eq!(cone2.dist_subgradient(&v(&[-3.0, 4.0])).unwrap(), v(&[-1.0, 0.0]));
        assert_eq!(cone2.dist_subgradient(&v(&[1.0, 4.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn box_projection_matches_grid_search() {
        let b = ConvexSet::boxed(r(2), v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let x = v(&[2.0, -0.5]);
        let p = b.project(&x).unwrap();
        assert_eq!(p, v(&[1.0, 0.0]));
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=1000 {
            for j in 0..=1000 {
                let (a, c) = (i as f64 * 1e-3, j as f64 * 1e-3);
                let d = (x[0] - a).powi(2) + (x[1] - c).powi(2);
                if d < best.0 {
                    best = (d, a, c);
                }
            }
        }
        assert!((best.1 - p[0]).abs() <= 1e-3 && (best.2 - p[1]).abs() <= 1e-3);
    }

    #[test]
    fn affine_basis_must_be_orthonormal() {
        let bad = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(ConvexSet::affine(r(2), bad, v(&[0.0, 0.0])).is_err());
        let good = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let a = ConvexSet::affine(r(2), good, v(&[0.0, 1.0])).unwrap();
        assert_eq!(a.project(&v(&[5.0, -3.0])).unwrap(), v(&[5.0, 1.0]));
    }

    #[test]
    fn normal_cone_examples() {
        let p = ConvexSet::singleton(r(2), v(&[1.0, 2.0])).unwrap();
        assert_eq!(p.normal_cone_residual(&v(&[1.0, 2.0]), &v(&[3.0, -7.0])).unwrap(), 0.0);
        let cone = ConvexSet::nonnegative(r(2));
        assert!(cone.normal_cone_residual(&v(&[0.0, 0.0]), &v(&[-1.0, -1.0])).unwrap() <= 0.0);
        let unit = ConvexSet::boxed(r(1), v(&[0.0]), v(&[1.0])).unwrap();
        assert_eq!(unit.normal_cone_residual(&v(&[1.0]), &v(&[1.0])).unwrap(), 0.0);
        assert_eq!(unit.normal_cone_residual(&v(&[0.0]), &v(&[-1.0])).unwrap(), 0.0);
        assert!(unit.normal_cone_residual(&v(&[0.5]), &v(&[1.0])).unwrap() > 0.4);
        assert!(matches!(
            cone.normal_cone_residual(&v(&[-1.0, 0.0]), &v(&[0.0, 0.0])),
            Err(FcError::Precondition(_))
        ));
    }

    #[test]
    fn tangent_samples() {
        let e = v(&[1.0, 2.0]);
        let p = ConvexSet::singleton(r(2), e.clone()).unwrap();
        assert!(p.tangent_cone_sample(&e, 20, 1).unwrap().iter().all(|d| d.amax() == 0.0));
        let cone = ConvexSet::nonnegative(r(3));
        let s = cone.tangent_cone_sample(&DVector::zeros(3), 200, 3).unwrap();
        assert!(s.iter().all(|d| d.iter().all(|c| *c >= 0.0) && d.norm() <= 1.0 + 1e-12));
        let whole = ConvexSet::whole(r(2));
        let s = whole.tangent_cone_sample(&DVector::zeros(2), 400, 5).unwrap();
        assert!(s.iter().all(|d| d.norm() <= 1.0 + 1e-12));
        assert!(coverage_angle(&r(2), &s, 200, 9) < 0.1);
    }

    #[test]
    fn abs_value_variations() {
        let s = r(1);
        let f = |x: &DVector<f64>| x.map(f64::abs);
        let h = [1e-1, 1e-2, 1e-3];
        let left = directional_variation(f, &s, &v(&[0.0]), &v(&[-1.0]), &h).unwrap();
        let right = directional_variation(f, &s, &v(&[0.0]), &v(&[1.0]), &h).unwrap();
        assert_eq!(left.xi[0], 1.0);
        assert_eq!(right.xi[0], 1.0);
        assert!(left.warning.is_none());
    }

    #[test]
    fn quadratic_variation_first_order() {
        let s = r(1);
        let f = |x: &DVector<f64>| x.map(|t| t * t);
        let q = directional_variation(f, &s, &v(&[3.0]), &v(&[1.0]), &[1e-3]).unwrap();
        assert!((q.xi[0] - 6.0).abs() <= 2e-3);
    }

    #[test]
    fn linear_map_variation_is_exact() {
        let s = r(2);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let f = |x: &DVector<f64>| &m * x;
        let dir = v(&[0.6, -0.8]);
        let q = directional_variation(f, &s, &v(&[1.0, 1.0]), &dir, &[1e-1, 1e-2]).unwrap();
        assert!((q.xi - &m * &dir).amax() < 1e-12);
    }
}
