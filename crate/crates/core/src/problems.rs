//! Concrete constrained problems shipped with the library.

use nalgebra::{DMatrix, DVector};

use crate::convex::ConvexSet;
use crate::error::{check_len, FcError, Result};
use crate::penalty::{ConstrainedProblem, MultiplierPair};
use crate::spaces::SpaceDescriptor;

/// Truncated sequence-space problem where Fritz John holds with a vanishing
/// cost multiplier: minimize `u_1` subject to
/// `f(u) = (u_2 + (u_1-1)^3, -u_2 + (u_1-1)^3, 0, u_4, ..., u_n) = 0`.
#[derive(Debug, Clone)]
pub struct CubicDegenerate {
    space: SpaceDescriptor,
    target: ConvexSet,
}

impl CubicDegenerate {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(FcError::Config(format!("dimension must be at least 3, got {dim}")));
        }
        let space = SpaceDescriptor::identity("l2", dim)?;
        let target = ConvexSet::origin(space.clone());
        Ok(Self { space, target })
    }

    fn image(&self, s: f64, u2: f64, rest: &DVector<f64>) -> DVector<f64> {
        let n = self.space.dim();
        let c = s * s * s;
        DVector::from_fn(n, |i, _| match i {
            0 => u2 + c,
            1 => -u2 + c,
            2 => 0.0,
            _ => rest[i],
        })
    }
}

impl ConstrainedProblem for CubicDegenerate {
    fn name(&self) -> &str {
        "l2-cubic"
    }

    fn control_space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn state_space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn target_set(&self) -> &ConvexSet {
        &self.target
    }

    fn reference_point(&self) -> DVector<f64> {
        let mut u = self.space.zeros();
        u[0] = 1.0;
        u
    }

    fn cost(&self, u: &DVector<f64>) -> f64 {
        u[0]
    }

    fn cost_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        g[0] = 1.0;
        g
    }

    fn constraint(&self, u: &DVector<f64>) -> DVector<f64> {
        self.image(u[0] - 1.0, u[1], u)
    }

    fn constraint_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_at(u[0] - 1.0)
    }

    fn cost_increment(&self, _base: &DVector<f64>, step: &DVector<f64>) -> f64 {
        step[0]
    }

    fn constraint_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        let shift = (base[0] - 1.0) + step[0];
        let moved = base + step;
        self.image(shift, moved[1], &moved)
    }

    fn constraint_jacobian_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_at((base[0] - 1.0) + step[0])
    }
}

impl CubicDegenerate {
    fn jacobian_at(&self, s: f64) -> DMatrix<f64> {
        let n = self.space.dim();
        let mut j = DMatrix::zeros(n, n);
        j[(0, 0)] = 3.0 * s * s;
        j[(1, 0)] = 3.0 * s * s;
        j[(0, 1)] = 1.0;
        j[(1, 1)] = -1.0;
        for i in 3..n {
            j[(i, i)] = 1.0;
        }
        j
    }
}

/// Scalar problem `minimize u subject to u = 0`.
#[derive(Debug, Clone)]
pub struct ScalarIdentity {
    space: SpaceDescriptor,
    target: ConvexSet,
}

impl ScalarIdentity {
    pub fn new() -> Self {
        let space = SpaceDescriptor::identity("R", 1).expect("1x1 identity gram");
        let target = ConvexSet::origin(space.clone());
        Self { space, target }
    }
}

impl Default for ScalarIdentity {
    fn default() -> Self {
        Self::new()
    }
}

impl ConstrainedProblem for ScalarIdentity {
    fn name(&self) -> &str {
        "scalar"
    }

    fn control_space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn state_space(&self) -> &SpaceDescriptor {
        &self.space
    }

    fn target_set(&self) -> &ConvexSet {
        &self.target
    }

    fn reference_point(&self) -> DVector<f64> {
        self.space.zeros()
    }

    fn cost(&self, u: &DVector<f64>) -> f64 {
        u[0]
    }

    fn cost_gradient(&self, _u: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    fn constraint(&self, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    fn constraint_jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }
}

/// Quadratic cost with an affine constraint map:
/// `f0(u) = u^T H u / 2 + c^T u`, `f(u) = A u + y`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    name: String,
    control: SpaceDescriptor,
    state: SpaceDescriptor,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    map: DMatrix<f64>,
    offset: DVector<f64>,
    target: ConvexSet,
    admissible: Option<ConvexSet>,
    reference: DVector<f64>,
}

/// Solution of an equality-constrained quadratic program by one dense
/// KKT solve, with its normalized multiplier pair.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub u: DVector<f64>,
    pub lambda: DVector<f64>,
    pub pair: MultiplierPair,
}

impl QuadraticProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        control: SpaceDescriptor,
        state: SpaceDescriptor,
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        map: DMatrix<f64>,
        offset: DVector<f64>,
        target: ConvexSet,
        reference: DVector<f64>,
    ) -> Result<Self> {
        let n = control.dim();
        check_len(n, hessian.nrows())?;
        check_len(n, hessian.ncols())?;
        check_len(n, linear.len())?;
        check_len(n, map.ncols())?;
        check_len(state.dim(), map.nrows())?;
        check_len(state.dim(), offset.len())?;
        check_len(state.dim(), target.space().dim())?;
        check_len(n, reference.len())?;
        Ok(Self {
            name: name.into(),
            control,
            state,
            hessian,
            linear,
            map,
            offset,
            target,
            admissible: None,
            reference,
        })
    }

    /// Equality-constrained program `f(u) = target`, with the reference point
    /// and multiplier taken from the dense KKT system.
    pub fn equality(
        name: impl Into<String>,
        control: SpaceDescriptor,
        state: SpaceDescriptor,
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        map: DMatrix<f64>,
        offset: DVector<f64>,
        target: DVector<f64>,
    ) -> Result<(Self, KktSolution)> {
        let sol = solve_kkt(&hessian, &linear, &map, &(&target - &offset), &state)?;
        let set = ConvexSet::singleton(state.clone(), target)?;
        let p = Self::new(name, control, state, hessian, linear, map, offset, set, sol.u.clone())?;
        Ok((p, sol))
    }

    pub fn with_admissible(mut self, set: ConvexSet) -> Result<Self> {
        check_len(self.control.dim(), set.space().dim())?;
        self.admissible = Some(set);
        Ok(self)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }
}

/// Solve `[H A^T; A 0] [u; lambda] = [-c; rhs]`. The returned pair is
/// `(1, lambda) / sqrt(1 + |lambda|^2)` with the dual norm of `state`,
/// matching `z0 grad f0 + A^T z = 0`.
pub fn solve_kkt(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    state: &SpaceDescriptor,
) -> Result<KktSolution> {
    state.check(rhs)?;
    let n = h.nrows();
    let m = a.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut b = DVector::zeros(n + m);
    b.rows_mut(0, n).copy_from(&(-c));
    b.rows_mut(n, m).copy_from(rhs);
    let sol = k
        .lu()
        .solve(&b)
        .ok_or_else(|| FcError::Config("KKT matrix is singular".into()))?;
    let u = sol.rows(0, n).into_owned();
    let lambda = sol.rows(n, m).into_owned();
    let scale = (1.0 + state.dual_norm(&lambda).powi(2)).sqrt();
    let pair = MultiplierPair {
        z0: 1.0 / scale,
        z: &lambda / scale,
    };
    Ok(KktSolution { u, lambda, pair })
}

impl ConstrainedProblem for QuadraticProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn control_space(&self) -> &SpaceDescriptor {
        &self.control
    }

    fn state_space(&self) -> &SpaceDescriptor {
        &self.state
    }

    fn target_set(&self) -> &ConvexSet {
        &self.target
    }

    fn admissible_set(&self) -> Option<&ConvexSet> {
        self.admissible.as_ref()
    }

    fn reference_point(&self) -> DVector<f64> {
        self.reference.clone()
    }

    fn cost(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.hessian * u)) + self.linear.dot(u)
    }

    fn cost_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.hessian * u + &self.linear
    }

    fn constraint(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.map * u + &self.offset
    }

    fn constraint_jacobian(&self, _u: &DVector<f64>) -> DMatrix<f64> {
        self.map.clone()
    }

    fn cost_increment(&self, base: &DVector<f64>, step: &DVector<f64>) -> f64 {
        self.cost_gradient(base).dot(step) + 0.5 * step.dot(&(&self.hessian * step))
    }

    fn constraint_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        self.constraint(base) + &self.map * step
    }

    fn cost_gradient_at_offset(&self, base: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        self.cost_gradient(base) + &self.hessian * step
    }
}
