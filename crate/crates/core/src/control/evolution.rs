//! Linearized evolution systems on a uniform time grid.
//!
//! The forward scheme is Crank-Nicolson with piecewise constant inputs,
//! `xi_{k+1} = P_k xi_k + Q_k w_k` with `M_k = (I - dt/2 A_k)^{-1}`,
//! `P_k = M_k (I + dt/2 A_k)` and `Q_k = dt M_k B_k`. Adjoints are the exact
//! transposes of this recursion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::convex::{ConvexSet, VariationSample};
use crate::error::{check_len, FcError, Result};
use crate::numeric;
use crate::penalty::MultiplierPair;
use crate::problems::{solve_kkt, KktSolution, QuadraticProblem};
use crate::spaces::SpaceDescriptor;

#[derive(Debug, Clone)]
pub struct EvolutionSystem {
    t_final: f64,
    dt: f64,
    drift: Vec<DMatrix<f64>>,
    control: Vec<DMatrix<f64>>,
    cost_state: Vec<DVector<f64>>,
    cost_control: Vec<DVector<f64>>,
    half_inverse: Vec<DMatrix<f64>>,
    propagator: Vec<DMatrix<f64>>,
    input: Vec<DMatrix<f64>>,
}

impl EvolutionSystem {
    /// One drift and one control matrix per time step.
    pub fn new(t_final: f64, drift: Vec<DMatrix<f64>>, control: Vec<DMatrix<f64>>) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(FcError::Config(format!("horizon must be positive, got {t_final}")));
        }
        let steps = drift.len();
        if steps == 0 {
            return Err(FcError::Config("at least one time step is required".into()));
        }
        check_len(steps, control.len())?;
        let n = drift[0].nrows();
        let m = control[0].ncols();
        for (a, b) in drift.iter().zip(&control) {
            check_len(n, a.nrows())?;
            check_len(n, a.ncols())?;
            check_len(n, b.nrows())?;
            check_len(m, b.ncols())?;
            if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(FcError::Config("system matrices must be finite".into()));
            }
        }
        let dt = t_final / steps as f64;
        let id = DMatrix::<f64>::identity(n, n);
        let mut half_inverse = Vec::with_capacity(steps);
        let mut propagator = Vec::with_capacity(steps);
        let mut input = Vec::with_capacity(steps);
        for (a, b) in drift.iter().zip(&control) {
            let inv = (&id - a * (0.5 * dt)).try_inverse().ok_or_else(|| {
                FcError::StepSize("I - dt/2 A is singular; use more time steps".into())
            })?;
            propagator.push(&inv * (&id + a * (0.5 * dt)));
            input.push(&inv * b * dt);
            half_inverse.push(inv);
        }
        Ok(Self {
            t_final,
            dt,
            drift,
            control,
            cost_state: vec![DVector::zeros(n); steps],
            cost_control: vec![DVector::zeros(m); steps],
            half_inverse,
            propagator,
            input,
        })
    }

    pub fn time_invariant(t_final: f64, steps: usize, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        Self::new(t_final, vec![a; steps], vec![b; steps])
    }

    /// Per-step cost gradients `g_y(t_k)` and `g_u(t_k)`.
    pub fn with_cost_gradients(mut self, g_y: Vec<DVector<f64>>, g_u: Vec<DVector<f64>>) -> Result<Self> {
        check_len(self.steps(), g_y.len())?;
        check_len(self.steps(), g_u.len())?;
        for (gy, gu) in g_y.iter().zip(&g_u) {
            check_len(self.state_dim(), gy.len())?;
            check_len(self.control_dim(), gu.len())?;
        }
        self.cost_state = g_y;
        self.cost_control = g_u;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.drift.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn state_dim(&self) -> usize {
        self.drift[0].nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.control[0].ncols()
    }

    pub fn drift(&self, k: usize) -> &DMatrix<f64> {
        &self.drift[k]
    }

    pub fn control_matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.control[k]
    }

    pub fn propagator(&self, k: usize) -> &DMatrix<f64> {
        &self.propagator[k]
    }

    pub fn input(&self, k: usize) -> &DMatrix<f64> {
        &self.input[k]
    }

    pub fn cost_state_gradient(&self, k: usize) -> &DVector<f64> {
        &self.cost_state[k]
    }

    pub fn cost_control_gradient(&self, k: usize) -> &DVector<f64> {
        &self.cost_control[k]
    }

    fn check_inputs(&self, w: &[DVector<f64>], dim: usize) -> Result<()> {
        check_len(self.steps(), w.len())?;
        w.iter().try_for_each(|x| check_len(dim, x.len()))
    }

    /// Trajectory of `xi' = A xi + B w`, `xi(0) = 0`, with `w` the control
    /// increment `v - u_bar` on each step.
    pub fn simulate(&self, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        self.check_inputs(w, self.control_dim())?;
        let mut xi = vec![DVector::zeros(self.state_dim())];
        for k in 0..self.steps() {
            let next = &self.propagator[k] * &xi[k] + &self.input[k] * &w[k];
            xi.push(next);
        }
        Ok(xi)
    }

    /// Matrix of `w -> xi(T)` with the inputs stacked step by step.
    pub fn endpoint_matrix(&self) -> DMatrix<f64> {
        let (n, m, steps) = (self.state_dim(), self.control_dim(), self.steps());
        let mut out = DMatrix::zeros(n, steps * m);
        let mut tail = DMatrix::<f64>::identity(n, n);
        for k in (0..steps).rev() {
            out.view_mut((0, k * m), (n, m)).copy_from(&(&tail * &self.input[k]));
            tail = &tail * &self.propagator[k];
        }
        out
    }

    /// For each grid time `t_k` (k = 0..=N) the maps `(Phi_k, S_k)` with
    /// `y_k = Phi_k y_0 + S_k u`.
    pub fn state_maps(&self) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, m, steps) = (self.state_dim(), self.control_dim(), self.steps());
        let mut out = Vec::with_capacity(steps + 1);
        let mut free = DMatrix::<f64>::identity(n, n);
        let mut forced = DMatrix::<f64>::zeros(n, steps * m);
        out.push((free.clone(), forced.clone()));
        for k in 0..steps {
            free = &self.propagator[k] * free;
            forced = &self.propagator[k] * forced;
            let mut block = forced.view_mut((0, k * m), (n, m));
            block += &self.input[k];
            out.push((free.clone(), forced.clone()));
        }
        out
    }
}

pub fn simulate_variation_evolution(sys: &EvolutionSystem, w: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    sys.simulate(w)
}

/// Needle-type variation from per-step drift differences
/// `F(t, y, v) - F(t, y, u)` and cost differences `g(t, y, v) - g(t, y, u)`,
/// normalized by the horizon.
pub fn spike_variation(sys: &EvolutionSystem, drift_diff: &[DVector<f64>], cost_diff: &[f64]) -> Result<VariationSample> {
    sys.check_inputs(drift_diff, sys.state_dim())?;
    check_len(sys.steps(), cost_diff.len())?;
    let dt = sys.dt();
    let mut xi = DVector::zeros(sys.state_dim());
    let mut xi0 = 0.0;
    for k in 0..sys.steps() {
        xi0 += dt * (sys.cost_state[k].dot(&xi) + cost_diff[k]);
        xi = &sys.propagator[k] * &xi + &sys.half_inverse[k] * &drift_diff[k] * dt;
    }
    let t = sys.t_final();
    Ok(VariationSample {
        xi0: xi0 / t,
        xi: xi / t,
    })
}

/// Discrete adjoint: `lambda` on the grid times and `mu` per step, where
/// `B_k^T mu_k` is the gradient of the endpoint pairing with respect to `w_k`.
#[derive(Debug, Clone, Serialize)]
pub struct AdjointTrajectory {
    #[serde(serialize_with = "numeric::coords_list")]
    pub lambda: Vec<DVector<f64>>,
    #[serde(serialize_with = "numeric::coords_list")]
    pub mu: Vec<DVector<f64>>,
}

/// `lambda_N = -z`, `lambda_k = P_k^T lambda_{k+1} - z0 dt g_y(t_k)`,
/// `mu_k = M_k^T lambda_{k+1}`.
pub fn adjoint_evolution(sys: &EvolutionSystem, z0: f64, z: &DVector<f64>) -> Result<AdjointTrajectory> {
    check_len(sys.state_dim(), z.len())?;
    let steps = sys.steps();
    let mut lambda = vec![DVector::zeros(sys.state_dim()); steps + 1];
    let mut mu = vec![DVector::zeros(sys.state_dim()); steps];
    lambda[steps] = -z;
    for k in (0..steps).rev() {
        mu[k] = sys.half_inverse[k].tr_mul(&lambda[k + 1]);
        lambda[k] = sys.propagator[k].tr_mul(&lambda[k + 1]) - &sys.cost_state[k] * (z0 * sys.dt());
    }
    Ok(AdjointTrajectory { lambda, mu })
}

/// Adjoint of the homogeneous system with terminal value `phi_t`.
pub fn homogeneous_adjoint(sys: &EvolutionSystem, phi_t: &DVector<f64>) -> Result<AdjointTrajectory> {
    adjoint_evolution(sys, 0.0, &(-phi_t))
}

/// Relative gap in `<phi_T, xi(T)> = sum_k dt <B_k^T mu_k, w_k>`.
pub fn evolution_duality_residual(sys: &EvolutionSystem, w: &[DVector<f64>], phi_t: &DVector<f64>) -> Result<f64> {
    let xi = sys.simulate(w)?;
    let adj = homogeneous_adjoint(sys, phi_t)?;
    let lhs = phi_t.dot(&xi[sys.steps()]);
    let terms: Vec<f64> = (0..sys.steps())
        .map(|k| sys.dt() * sys.control[k].tr_mul(&adj.mu[k]).dot(&w[k]))
        .collect();
    let rhs: f64 = terms.iter().sum();
    let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(lhs.abs());
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
}

/// Pointwise Hamiltonian `H(t_k, psi, u)`; only differences in `u` matter.
pub trait Hamiltonian {
    fn value(&self, step: usize, psi: &DVector<f64>, u: &DVector<f64>) -> f64;
}

/// `<psi, B_k u> - z0 u^T R u / 2`.
#[derive(Debug, Clone)]
pub struct QuadraticHamiltonian<'a> {
    pub system: &'a EvolutionSystem,
    pub control_weight: DMatrix<f64>,
    pub z0: f64,
}

impl Hamiltonian for QuadraticHamiltonian<'_> {
    fn value(&self, step: usize, psi: &DVector<f64>, u: &DVector<f64>) -> f64 {
        psi.dot(&(self.system.control_matrix(step) * u)) - 0.5 * self.z0 * u.dot(&(&self.control_weight * u))
    }
}

/// Sampler of the control set `U`.
pub trait ControlSet {
    fn sample(&self, step: usize, count: usize, seed: u64) -> Vec<DVector<f64>>;
}

/// Finitely many admissible values, all returned every time.
#[derive(Debug, Clone)]
pub struct FiniteControls(pub Vec<DVector<f64>>);

impl ControlSet for FiniteControls {
    fn sample(&self, _step: usize, _count: usize, _seed: u64) -> Vec<DVector<f64>> {
        self.0.clone()
    }
}

/// A box of controls: its vertices plus uniform interior samples.
#[derive(Debug, Clone)]
pub struct BoxControls {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl ControlSet for BoxControls {
    fn sample(&self, step: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let m = self.lo.len();
        let mut out = Vec::new();
        if m <= 10 {
            for mask in 0..(1usize << m) {
                out.push(DVector::from_fn(m, |i, _| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }));
            }
        }
        let mut rng = numeric::rng(seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for _ in 0..count {
            out.push(DVector::from_fn(m, |i, _| {
                self.lo[i] + rng.random::<f64>() * (self.hi[i] - self.lo[i])
            }));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximumPrincipleReport {
    /// `max_k max_u H(t_k, mu_k, u) - H(t_k, mu_k, u_bar_k)`.
    pub hamiltonian_gap: f64,
    /// `max_k |B_k^T mu_k - z0 g_u(t_k)|`.
    pub stationarity: f64,
    /// False for the excluded trivial pair.
    pub valid: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn maximum_principle_residual(
    sys: &EvolutionSystem,
    pair: &MultiplierPair,
    adjoint: &AdjointTrajectory,
    hamiltonian: &dyn Hamiltonian,
    reference: &[DVector<f64>],
    controls: &dyn ControlSet,
    samples: usize,
    seed: u64,
) -> Result<MaximumPrincipleReport> {
    sys.check_inputs(reference, sys.control_dim())?;
    check_len(sys.steps(), adjoint.mu.len())?;
    let valid = pair.z0 != 0.0 || pair.z.amax() != 0.0;
    let mut gap = f64::NEG_INFINITY;
    let mut stationarity: f64 = 0.0;
    for k in 0..sys.steps() {
        let psi = &adjoint.mu[k];
        let base = hamiltonian.value(k, psi, &reference[k]);
        for u in controls.sample(k, samples, seed) {
            gap = gap.max(hamiltonian.value(k, psi, &u) - base);
        }
        let r = sys.control[k].tr_mul(psi) - &sys.cost_control[k] * pair.z0;
        stationarity = stationarity.max(r.amax());
    }
    Ok(MaximumPrincipleReport {
        hamiltonian_gap: gap.max(0.0),
        stationarity,
        valid,
    })
}

/// Linear-quadratic problem with a fixed endpoint:
/// minimize `sum_k dt (y_k^T Q y_k + u_k^T R u_k) / 2` over the controls,
/// subject to `y_N = target`, `y_0 = initial`.
#[derive(Debug, Clone)]
pub struct LqEndpoint {
    pub system: EvolutionSystem,
    pub state_weight: DMatrix<f64>,
    pub control_weight: DMatrix<f64>,
    pub initial: DVector<f64>,
    pub target: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LqSolution {
    pub problem: QuadraticProblem,
    pub kkt: KktSolution,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// The system with the cost gradients along the optimal pair.
    pub system: EvolutionSystem,
}

impl LqEndpoint {
    pub fn build(&self) -> Result<LqSolution> {
        let sys = &self.system;
        let (n, m, steps, dt) = (sys.state_dim(), sys.control_dim(), sys.steps(), sys.dt());
        check_len(n, self.initial.len())?;
        check_len(n, self.target.len())?;
        let maps = sys.state_maps();
        let dim = steps * m;
        let mut hessian = DMatrix::zeros(dim, dim);
        let mut linear = DVector::zeros(dim);
        for (free, forced) in &maps[..steps] {
            let qs = &self.state_weight * forced;
            hessian += forced.tr_mul(&qs) * dt;
            linear += forced.tr_mul(&(&self.state_weight * (free * &self.initial))) * dt;
        }
        for k in 0..steps {
            let mut block = hessian.view_mut((k * m, k * m), (m, m));
            block += &self.control_weight * dt;
        }
        let (free_n, forced_n) = &maps[steps];
        let offset = free_n * &self.initial;
        let control = SpaceDescriptor::scaled("controls", dim, dt)?;
        let state = SpaceDescriptor::identity("endpoint", n)?;
        let kkt = solve_kkt(&hessian, &linear, forced_n, &(&self.target - &offset), &state)?;
        let set = ConvexSet::singleton(state.clone(), self.target.clone())?;
        let problem = QuadraticProblem::new(
            "lq-endpoint",
            control,
            state,
            hessian,
            linear,
            forced_n.clone(),
            offset,
            set,
            kkt.u.clone(),
        )?;
        let controls: Vec<DVector<f64>> = (0..steps).map(|k| kkt.u.rows(k * m, m).into_owned()).collect();
        let states: Vec<DVector<f64>> = maps.iter().map(|(f, s)| f * &self.initial + s * &kkt.u).collect();
        let g_y = states[..steps].iter().map(|y| &self.state_weight * y).collect();
        let g_u = controls.iter().map(|u| &self.control_weight * u).collect();
        let system = sys.clone().with_cost_gradients(g_y, g_u)?;
        Ok(LqSolution {
            problem,
            kkt,
            states,
            controls,
            system,
        })
    }
}
