//! Linear SDE/BSDE pair on a recombining-free binary tree.
//!
//! Level `j` (time `j dt`) has `2^j` nodes; node `i` has children `2i`
//! (increment `+sqrt(dt)`) and `2i + 1` (increment `-sqrt(dt)`), each with
//! probability 1/2. Conditional expectations are exact half-sums, so the
//! tree model is the ground truth and discrete duality holds exactly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::EstimateReport;
use crate::error::{check_len, FcError, Result};
use crate::spaces::RANK_TOL;

/// Values of an adapted process: `levels[j][i]` at node `i` of level `j`.
pub type Process = Vec<Vec<DVector<f64>>>;

/// Dimension cap for dense estimate computations.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BsdeScheme {
    /// `phi_j = (I - dt A1^T)^{-1} (E[phi_{j+1}] + dt A2^T Phi_j + dt z0 g_y)`,
    /// dual to the semi-implicit forward step.
    Implicit,
    /// `phi_j = (I + dt A1^T) E[phi_{j+1}] + dt A2^T Phi_j + dt z0 g_y`,
    /// dual to forward Euler.
    Explicit,
}

#[derive(Debug, Clone)]
pub struct TreeModel {
    depth: usize,
    t_final: f64,
    dt: f64,
    a1: Vec<DMatrix<f64>>,
    a2: Vec<DMatrix<f64>>,
    c1: Vec<DMatrix<f64>>,
    c2: Vec<DMatrix<f64>>,
    scheme: BsdeScheme,
    /// `(I - dt A1^T)^{-1}` or `(I + dt A1^T)` per step, depending on the scheme.
    backward: Vec<DMatrix<f64>>,
}

impl TreeModel {
    /// One coefficient matrix per step: `A1, A2` are `n x n`, `C1, C2` are `n x m`.
    pub fn new(
        depth: usize,
        t_final: f64,
        a1: Vec<DMatrix<f64>>,
        a2: Vec<DMatrix<f64>>,
        c1: Vec<DMatrix<f64>>,
        c2: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if depth == 0 || depth > 24 {
            return Err(FcError::Config(format!("tree depth must lie in 1..=24, got {depth}")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(FcError::Config(format!("horizon must be positive, got {t_final}")));
        }
        for v in [&a1, &a2, &c1, &c2] {
            check_len(depth, v.len())?;
        }
        let n = a1[0].nrows();
        let m = c1[0].ncols();
        for j in 0..depth {
            for a in [&a1[j], &a2[j]] {
                check_len(n, a.nrows())?;
                check_len(n, a.ncols())?;
            }
            for c in [&c1[j], &c2[j]] {
                check_len(n, c.nrows())?;
                check_len(m, c.ncols())?;
            }
        }
        let mut model = Self {
            depth,
            t_final,
            dt: t_final / depth as f64,
            a1,
            a2,
            c1,
            c2,
            scheme: BsdeScheme::Implicit,
            backward: Vec::new(),
        };
        model.backward = model.backward_operators()?;
        Ok(model)
    }

    pub fn time_invariant(
        depth: usize,
        t_final: f64,
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        c1: DMatrix<f64>,
        c2: DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(depth, t_final, vec![a1; depth], vec![a2; depth], vec![c1; depth], vec![c2; depth])
    }

    pub fn with_scheme(mut self, scheme: BsdeScheme) -> Result<Self> {
        self.scheme = scheme;
        self.backward = self.backward_operators()?;
        Ok(self)
    }

    fn backward_operators(&self) -> Result<Vec<DMatrix<f64>>> {
        let n = self.state_dim();
        let id = DMatrix::<f64>::identity(n, n);
        self.a1
            .iter()
            .map(|a| {
                let at = a.transpose() * self.dt;
                match self.scheme {
                    BsdeScheme::Implicit => (&id - at).try_inverse().ok_or_else(|| {
                        FcError::StepSize("I - dt A1^T is singular; use a deeper tree".into())
                    }),
                    BsdeScheme::Explicit => Ok(&id + at),
                }
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn scheme(&self) -> BsdeScheme {
        self.scheme
    }

    pub fn state_dim(&self) -> usize {
        self.a1[0].nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.c1[0].ncols()
    }

    pub fn leaves(&self) -> usize {
        1 << self.depth
    }

    fn check_process(&self, p: &Process, levels: usize, dim: usize) -> Result<()> {
        check_len(levels, p.len())?;
        for (j, level) in p.iter().enumerate() {
            check_len(1 << j, level.len())?;
            level.iter().try_for_each(|v| check_len(dim, v.len()))?;
        }
        Ok(())
    }
}

/// Backward solution: `phi` on levels `0..=d`, `big_phi` on levels `0..d`,
/// and `dual` = `C1^T phi + C2^T Phi` (the explicit scheme pairs `C1` with
/// the conditional mean instead).
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub phi: Process,
    pub big_phi: Process,
    pub dual: Process,
}

/// Matrix-valued backward pass; each node carries `n x K` columns.
fn backward_columns(
    model: &TreeModel,
    terminal: Vec<DMatrix<f64>>,
    driver: Option<(f64, &Process)>,
) -> (Vec<Vec<DMatrix<f64>>>, Vec<Vec<DMatrix<f64>>>, Vec<Vec<DMatrix<f64>>>) {
    let d = model.depth;
    let root = model.dt.sqrt();
    let mut phi = vec![Vec::new(); d + 1];
    let mut big = vec![Vec::new(); d];
    let mut dual = vec![Vec::new(); d];
    phi[d] = terminal;
    for j in (0..d).rev() {
        let (a2t, c1t, c2t) = (model.a2[j].transpose(), model.c1[j].transpose(), model.c2[j].transpose());
        let back = &model.backward[j];
        let count = 1 << j;
        let mut level_phi = Vec::with_capacity(count);
        let mut level_big = Vec::with_capacity(count);
        let mut level_dual = Vec::with_capacity(count);
        for i in 0..count {
            let up = &phi[j + 1][2 * i];
            let dn = &phi[j + 1][2 * i + 1];
            let mean = (up + dn) * 0.5;
            let z = (up - dn) * (0.5 / root);
            let mut rhs = match model.scheme {
                BsdeScheme::Implicit => &mean + &a2t * &z * model.dt,
                BsdeScheme::Explicit => mean.clone(),
            };
            if let Some((z0, g)) = driver {
                let gy = &g[j][i];
                for mut col in rhs.column_iter_mut() {
                    col += gy * (z0 * model.dt);
                }
            }
            let value = match model.scheme {
                BsdeScheme::Implicit => back * rhs,
                BsdeScheme::Explicit => {
                    let mut v = back * &mean + &a2t * &z * model.dt;
                    if let Some((z0, g)) = driver {
                        let gy = &g[j][i];
                        for mut col in v.column_iter_mut() {
                            col += gy * (z0 * model.dt);
                        }
                    }
                    v
                }
            };
            let pair = match model.scheme {
                BsdeScheme::Implicit => &c1t * &value + &c2t * &z,
                BsdeScheme::Explicit => &c1t * &mean + &c2t * &z,
            };
            level_phi.push(value);
            level_big.push(z);
            level_dual.push(pair);
        }
        phi[j] = level_phi;
        big[j] = level_big;
        dual[j] = level_dual;
    }
    (phi, big, dual)
}

fn to_process(levels: Vec<Vec<DMatrix<f64>>>) -> Process {
    levels
        .into_iter()
        .map(|l| l.into_iter().map(|m| m.column(0).into_owned()).collect())
        .collect()
}

/// Solve the linear BSDE backward from `terminal` (one value per leaf),
/// optionally with the driver `z0 g_y` given on levels `0..d`.
pub fn tree_bsde_solve(
    model: &TreeModel,
    z0: f64,
    driver: Option<&Process>,
    terminal: &[DVector<f64>],
) -> Result<BsdeSolution> {
    let n = model.state_dim();
    check_len(model.leaves(), terminal.len())?;
    terminal.iter().try_for_each(|v| check_len(n, v.len()))?;
    if let Some(g) = driver {
        model.check_process(g, model.depth, n)?;
    }
    let leaves = terminal.iter().map(|v| DMatrix::from_column_slice(n, 1, v.as_slice())).collect();
    let (phi, big, dual) = backward_columns(model, leaves, driver.map(|g| (z0, g)));
    Ok(BsdeSolution {
        phi: to_process(phi),
        big_phi: to_process(big),
        dual: to_process(dual),
    })
}

/// Forward variational equation with control `u` on levels `0..d`, `xi_0 = 0`.
///
/// Implicit scheme: `zeta = (I - dt A1)^{-1} (xi + dt C1 u)`,
/// `xi' = zeta + (A2 zeta + C2 u) dB`. Explicit scheme: forward Euler.
pub fn simulate_forward(model: &TreeModel, u: &Process) -> Result<Process> {
    let (n, m, d) = (model.state_dim(), model.control_dim(), model.depth);
    model.check_process(u, d, m)?;
    let root = model.dt.sqrt();
    let mut xi: Process = vec![vec![DVector::zeros(n)]];
    for j in 0..d {
        let forward = model.backward[j].transpose();
        let mut next = Vec::with_capacity(2 << j);
        for (i, x) in xi[j].iter().enumerate() {
            let uj = &u[j][i];
            let (base, noise) = match model.scheme {
                BsdeScheme::Implicit => {
                    let zeta = &forward * (x + &model.c1[j] * uj * model.dt);
                    let noise = &model.a2[j] * &zeta + &model.c2[j] * uj;
                    (zeta, noise)
                }
                BsdeScheme::Explicit => {
                    let base = &forward * x + &model.c1[j] * uj * model.dt;
                    let noise = &model.a2[j] * x + &model.c2[j] * uj;
                    (base, noise)
                }
            };
            next.push(&base + &noise * root);
            next.push(&base - &noise * root);
        }
        xi.push(next);
    }
    Ok(xi)
}

/// `E <phi_T, xi(T)>` against `E sum_j dt <C1^T phi + C2^T Phi, u>`, relative
/// to the sum of absolute contributions.
pub fn sde_duality_residual(model: &TreeModel, u: &Process, terminal: &[DVector<f64>]) -> Result<f64> {
    let xi = simulate_forward(model, u)?;
    let sol = tree_bsde_solve(model, 0.0, None, terminal)?;
    let d = model.depth;
    let leaf_weight = 1.0 / model.leaves() as f64;
    let lhs: f64 = terminal.iter().zip(&xi[d]).map(|(p, x)| p.dot(x)).sum::<f64>() * leaf_weight;
    let mut rhs = 0.0;
    let mut scale = lhs.abs();
    for j in 0..d {
        let w = model.dt / (1u64 << j) as f64;
        for (p, v) in sol.dual[j].iter().zip(&u[j]) {
            let t = w * p.dot(v);
            rhs += t;
            scale += t.abs();
        }
    }
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
}

/// Which observation of the terminal value is added to the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialObservation {
    /// Add `phi(0)`.
    Phi0,
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeEstimate {
    pub depth: usize,
    /// Dimension of the terminal space, `2^d n`.
    pub dim: usize,
    /// Estimate on the whole terminal space.
    pub full: EstimateReport,
    /// Estimate on the complement of the numerical kernel.
    pub restricted: EstimateReport,
}

/// `E|phi_T|^2 <= C^2 (E sum_j dt |C1^T phi + C2^T Phi|^2 + |G phi_T|^2)`.
pub fn sde_estimate_constant(model: &TreeModel, observation: InitialObservation, dim_cap: usize) -> Result<SdeEstimate> {
    let (n, m, d) = (model.state_dim(), model.control_dim(), model.depth);
    let leaves = model.leaves();
    let dim = leaves * n;
    if dim > dim_cap {
        return Err(FcError::Resource(format!(
            "terminal space has dimension {dim} above the cap {dim_cap}; use a smaller depth"
        )));
    }
    let terminal: Vec<DMatrix<f64>> = (0..leaves)
        .map(|l| {
            let mut t = DMatrix::zeros(n, dim);
            t.view_mut((0, l * n), (n, n)).fill_with_identity();
            t
        })
        .collect();
    let (phi, _, dual) = backward_columns(model, terminal, None);
    let obs_rows = m * (leaves - 1) + if observation == InitialObservation::Phi0 { n } else { 0 };
    let mut rows = DMatrix::zeros(obs_rows, dim);
    let mut r = 0;
    for (j, level) in dual.iter().enumerate() {
        let w = (model.dt / (1u64 << j) as f64).sqrt();
        for block in level {
            rows.view_mut((r, 0), (m, dim)).copy_from(&(block * w));
            r += m;
        }
    }
    if observation == InitialObservation::Phi0 {
        rows.view_mut((r, 0), (n, dim)).copy_from(&phi[0][0]);
    }
    // terminal gram is I / 2^d, so Euclidean coordinates scale by 2^{d/2}
    rows *= (leaves as f64).sqrt();
    let mut sigmas: Vec<f64> = if rows.nrows() == 0 {
        Vec::new()
    } else {
        rows.singular_values().iter().copied().collect()
    };
    sigmas.sort_by(|a, b| b.total_cmp(a));
    let _ = d;
    Ok(SdeEstimate {
        depth: model.depth,
        dim,
        full: EstimateReport::full(sigmas.clone(), dim, RANK_TOL),
        restricted: EstimateReport::restricted(sigmas, dim, RANK_TOL),
    })
}

/// Orthonormal basis of `ker C2^T` at the last step.
pub fn control_kernel(model: &TreeModel) -> Vec<DVector<f64>> {
    let c2 = &model.c2[model.depth - 1];
    let n = c2.nrows();
    let svd = c2.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    (0..n)
        .filter(|&k| k >= svd.singular_values.len() || svd.singular_values[k] <= RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .filter(|&k| k < u.ncols())
        .map(|k| u.column(k).into_owned())
        .chain((u.ncols()..n).map(|k| {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            e
        }))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub k: usize,
    pub window_steps: usize,
    pub r_norm_sq: f64,
    /// `E |psi(T)|^2`.
    pub terminal_energy: f64,
    /// `E sum_j dt |C1^T psi_j + C2^T r_j|^2`, the observed side of the estimate.
    pub observed_energy: f64,
}

/// Drive the adjoint equation with `r_k = r_hat / sqrt(window)` on the last
/// `ceil(d / k)` steps and zero before, starting from `psi_0 = 0`.
pub fn rank_deficiency_witness(model: &TreeModel, r_hat: &DVector<f64>, k: usize) -> Result<WitnessReport> {
    let (n, d) = (model.state_dim(), model.depth);
    check_len(n, r_hat.len())?;
    let r_norm_sq = r_hat.norm_squared();
    if r_norm_sq == 0.0 {
        return Err(FcError::Precondition("r_hat must be nonzero".into()));
    }
    for c2 in &model.c2 {
        let miss = c2.tr_mul(r_hat).norm();
        if miss > 1e-12 * (1.0 + c2.norm()) * r_norm_sq.sqrt() {
            let kernel = control_kernel(model);
            return Err(FcError::Precondition(if kernel.is_empty() {
                "C2^T has a trivial kernel, so no witness direction exists".into()
            } else {
                format!("r_hat is not in the kernel of C2^T (|C2^T r_hat| = {miss:e})")
            }));
        }
    }
    if k == 0 || k > d {
        return Err(FcError::Precondition(format!("k must lie in 1..={d}, got {k}")));
    }
    let window = d.div_ceil(k);
    let dt = model.dt;
    let root = dt.sqrt();
    let r_window = r_hat / (window as f64 * dt).sqrt();
    let mut psi: Vec<DVector<f64>> = vec![DVector::zeros(n)];
    let mut observed = 0.0;
    for j in 0..d {
        let active = j >= d - window;
        let r = if active { r_window.clone() } else { DVector::zeros(n) };
        let a2r = model.a2[j].tr_mul(&r) * dt;
        let c2r = model.c2[j].tr_mul(&r);
        let weight = dt / (1u64 << j) as f64;
        // invert the backward step for the conditional mean
        let undo = match model.scheme {
            BsdeScheme::Implicit => DMatrix::<f64>::identity(n, n) - model.a1[j].transpose() * dt,
            BsdeScheme::Explicit => model.backward[j]
                .clone()
                .try_inverse()
                .ok_or_else(|| FcError::StepSize("I + dt A1^T is singular".into()))?,
        };
        let mut next = Vec::with_capacity(2 * psi.len());
        for p in &psi {
            let mean = match model.scheme {
                BsdeScheme::Implicit => &undo * p - &a2r,
                BsdeScheme::Explicit => &undo * (p - &a2r),
            };
            let c1_arg = match model.scheme {
                BsdeScheme::Implicit => p,
                BsdeScheme::Explicit => &mean,
            };
            observed += weight * (model.c1[j].tr_mul(c1_arg) + &c2r).norm_squared();
            next.push(&mean + &r * root);
            next.push(&mean - &r * root);
        }
        psi = next;
    }
    let terminal_energy = psi.iter().map(|p| p.norm_squared()).sum::<f64>() / psi.len() as f64;
    Ok(WitnessReport {
        k,
        window_steps: window,
        r_norm_sq,
        terminal_energy,
        observed_energy: observed,
    })
}

/// Leaf values of `sum_j r_j dB_j` for an adapted `r` on levels `0..d`.
pub fn ito_integral(depth: usize, dt: f64, r: &Process) -> Result<Vec<DVector<f64>>> {
    check_len(depth, r.len())?;
    let n = r.first().and_then(|l| l.first()).map_or(0, |v| v.len());
    let root = dt.sqrt();
    let mut acc: Vec<DVector<f64>> = vec![DVector::zeros(n)];
    for (j, level) in r.iter().enumerate() {
        check_len(1 << j, level.len())?;
        let mut next = Vec::with_capacity(2 * acc.len());
        for (x, rj) in acc.iter().zip(level) {
            next.push(x + rj * root);
            next.push(x - rj * root);
        }
        acc = next;
    }
    Ok(acc)
}
