//! Observability of the 1-D wave equation `phi_tt - phi_xx + a phi = 0` on
//! (0, 1) with Dirichlet ends, observed on a subinterval over `(0, T)`.
//!
//! Solutions are expanded in `M` sine modes with exact time evolution; the
//! terminal data `(phi_1, phi_2)` carry the `L^2 x H^-1` energy norm, in which
//! the mode coefficients are orthonormal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::{classify_growth, Constant, EstimateReport, GrowthRule, LevelReport, SweepReport, HEURISTIC_NOTE};
use crate::error::{FcError, Result};
use crate::numeric::{composite_gauss, coords};
use crate::spaces::RANK_TOL;

/// Quadrature points per shortest period below which results are refused.
pub const MIN_POINTS_PER_PERIOD: f64 = 10.0;
const DEFAULT_POINTS_PER_PERIOD: f64 = 20.0;
const GAUSS_ORDER: usize = 8;
/// Condition number beyond which the Gramian eigenvalues are recomputed from
/// singular values of the sampling matrix.
const REFINE_RATIO: f64 = 1e-8;
const REFINE_ENTRY_CAP: usize = 60_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct WaveModel {
    modes: usize,
    observation: (f64, f64),
    t_final: f64,
    potential: f64,
    time_step: Option<f64>,
}

impl WaveModel {
    pub fn new(modes: usize, observation: (f64, f64), t_final: f64, potential: f64) -> Result<Self> {
        let (lo, hi) = observation;
        if modes == 0 {
            return Err(FcError::Config("at least one mode is required".into()));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(FcError::Config(format!("observation interval ({lo}, {hi}) must lie in (0, 1)")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(FcError::Config(format!("horizon must be positive, got {t_final}")));
        }
        if !(PI * PI + potential > 0.0) {
            return Err(FcError::Config(format!(
                "potential {potential} makes the first frequency imaginary"
            )));
        }
        Ok(Self {
            modes,
            observation,
            t_final,
            potential,
            time_step: None,
        })
    }

    /// Fix the time quadrature spacing instead of deriving it from the top frequency.
    pub fn with_time_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(FcError::Config(format!("time step must be positive, got {step}")));
        }
        self.time_step = Some(step);
        Ok(self)
    }

    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        let mut m = Self::new(modes, self.observation, self.t_final, self.potential)?;
        m.time_step = self.time_step;
        Ok(m)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn observation(&self) -> (f64, f64) {
        self.observation
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn potential(&self) -> f64 {
        self.potential
    }

    pub fn frequency(&self, k: usize) -> f64 {
        let kp = k as f64 * PI;
        (kp * kp + self.potential).sqrt()
    }

    fn quadrature(&self) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let period = 2.0 * PI / self.frequency(self.modes);
        let step = self.time_step.unwrap_or(period / DEFAULT_POINTS_PER_PERIOD);
        let per_period = period / step;
        if per_period < MIN_POINTS_PER_PERIOD {
            return Err(FcError::Accuracy(format!(
                "time step {step:e} gives {per_period:.2} points per shortest period; at least {MIN_POINTS_PER_PERIOD} are needed"
            )));
        }
        let panels = (self.t_final / (GAUSS_ORDER as f64 * step)).ceil() as usize;
        let (t, w) = composite_gauss(0.0, self.t_final, panels, GAUSS_ORDER);
        Ok((t, w, per_period))
    }

    /// Time profiles of the `2M` basis solutions at `s = T - t`: column
    /// `2(k-1)` is `cos(w s)`, column `2(k-1)+1` is `(k pi / w) sin(w s)`.
    fn time_profiles(&self, times: &[f64]) -> DMatrix<f64> {
        let m = self.modes;
        DMatrix::from_fn(times.len(), 2 * m, |q, c| {
            let k = c / 2 + 1;
            let w = self.frequency(k);
            let s = self.t_final - times[q];
            if c % 2 == 0 {
                (w * s).cos()
            } else {
                k as f64 * PI / w * (w * s).sin()
            }
        })
    }

    /// `2 int_lo^hi sin(k pi x) sin(l pi x) dx` for `k, l = 1..=M`.
    fn spatial_overlap(&self) -> DMatrix<f64> {
        let (lo, hi) = self.observation;
        let m = self.modes;
        // antiderivative of cos(j pi x), with the j = 0 case giving x
        let prim = |j: i64, x: f64| {
            if j == 0 {
                x
            } else {
                (j as f64 * PI * x).sin() / (j as f64 * PI)
            }
        };
        DMatrix::from_fn(m, m, |i, j| {
            let (k, l) = (i as i64 + 1, j as i64 + 1);
            let diff = prim(k - l, hi) - prim(k - l, lo);
            let sum = prim(k + l, hi) - prim(k + l, lo);
            diff - sum
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedConstant {
    pub excluded: usize,
    pub constant: Constant,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveReport {
    pub modes: usize,
    pub t_final: f64,
    pub observation: (f64, f64),
    pub potential: f64,
    /// `C = 1 / sqrt(lambda_min)` of the observation Gramian; the profile lists
    /// `sqrt(lambda)` descending.
    pub estimate: EstimateReport,
    /// Constants on the complement of the `j` least observable directions.
    pub excluded: Vec<ExcludedConstant>,
    /// Least observable direction in energy coordinates `(c_1, d_1, c_2, ...)`.
    #[serde(serialize_with = "coords")]
    pub worst_mode: DVector<f64>,
    pub refined: bool,
    pub points_per_period: f64,
    pub warnings: Vec<String>,
}

/// Observation Gramian in energy coordinates.
pub fn observation_gramian(model: &WaveModel) -> Result<DMatrix<f64>> {
    let (t, w, _) = model.quadrature()?;
    Ok(gramian_from(model, &t, &w))
}

fn gramian_from(model: &WaveModel, t: &[f64], w: &[f64]) -> DMatrix<f64> {
    let profiles = model.time_profiles(t);
    let sw = DVector::from_iterator(w.len(), w.iter().map(|v| v.sqrt()));
    let weighted = DMatrix::from_fn(profiles.nrows(), profiles.ncols(), |q, c| profiles[(q, c)] * sw[q]);
    let time_gram = weighted.tr_mul(&weighted);
    let overlap = model.spatial_overlap();
    DMatrix::from_fn(time_gram.nrows(), time_gram.ncols(), |i, j| {
        overlap[(i / 2, j / 2)] * time_gram[(i, j)]
    })
}

/// Square roots of the Gramian eigenvalues from the SVD of the sampled
/// observation, `sqrt(w_t w_x) phi(t, x)`.
fn sampled_singular_values(model: &WaveModel, t: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let m = model.modes;
    let (lo, hi) = model.observation;
    let wavelength = 2.0 / m as f64;
    let panels = (((hi - lo) / wavelength) * DEFAULT_POINTS_PER_PERIOD / GAUSS_ORDER as f64).ceil() as usize + 1;
    let (x, wx) = composite_gauss(lo, hi, panels, GAUSS_ORDER);
    let rows = t.len() * x.len();
    if rows * 2 * m > REFINE_ENTRY_CAP {
        return None;
    }
    let profiles = model.time_profiles(t);
    let shapes = DMatrix::from_fn(x.len(), m, |p, k| {
        std::f64::consts::SQRT_2 * ((k + 1) as f64 * PI * x[p]).sin() * wx[p].sqrt()
    });
    let mut sample = DMatrix::zeros(rows, 2 * m);
    for q in 0..t.len() {
        let sw = w[q].sqrt();
        for p in 0..x.len() {
            let r = q * x.len() + p;
            for c in 0..2 * m {
                sample[(r, c)] = sw * shapes[(p, c / 2)] * profiles[(q, c)];
            }
        }
    }
    let mut s: Vec<f64> = sample.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Some(s)
}

/// `|(phi_1, phi_2)|_{L^2 x H^-1} <= C |phi|_{L^2(G_0 x (0, T))}` over the
/// span of the first `M` modes, plus constants with the worst `j` directions
/// removed for each `j` in `exclude`.
pub fn wave_observability_constant(model: &WaveModel, exclude: &[usize]) -> Result<WaveReport> {
    let (t, w, per_period) = model.quadrature()?;
    let gram = gramian_from(model, &t, &w);
    let dim = gram.nrows();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let worst_mode = eig.eigenvectors.column(order[dim - 1]).into_owned();
    let mut sigmas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let mut warnings = Vec::new();
    let mut refined = false;
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmax > 0.0 && lmin / lmax < REFINE_RATIO {
        match sampled_singular_values(model, &t, &w) {
            Some(s) => {
                sigmas = s;
                refined = true;
            }
            None => warnings.push("Gramian is ill conditioned and too large to refine; eigenvalues kept".into()),
        }
    }
    let estimate = EstimateReport::full(sigmas.clone(), dim, RANK_TOL);
    let smax = sigmas.first().copied().unwrap_or(0.0);
    let excluded = exclude
        .iter()
        .map(|&j| ExcludedConstant {
            excluded: j,
            constant: if j >= dim {
                Constant::Finite(0.0)
            } else {
                Constant::from_sigma(sigmas[dim - 1 - j], smax, RANK_TOL)
            },
        })
        .collect();
    Ok(WaveReport {
        modes: model.modes,
        t_final: model.t_final,
        observation: model.observation,
        potential: model.potential,
        estimate,
        excluded,
        worst_mode,
        refined,
        points_per_period: per_period,
        warnings,
    })
}

/// Constants over increasing mode counts with the growth verdict.
pub fn wave_sweep(
    model: &WaveModel,
    modes: &[usize],
    exclude: &[usize],
    rule: GrowthRule,
) -> Result<(SweepReport, Vec<WaveReport>)> {
    if modes.len() < 3 || modes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FcError::Precondition("a sweep needs at least 3 increasing mode counts".into()));
    }
    let reports = modes
        .iter()
        .map(|&m| wave_observability_constant(&model.with_modes(m)?, exclude))
        .collect::<Result<Vec<_>>>()?;
    let levels: Vec<LevelReport> = reports
        .iter()
        .map(|r| LevelReport {
            n: r.modes,
            report: r.estimate.clone(),
        })
        .collect();
    let verdict = classify_growth(&levels, rule);
    let (lo, hi) = model.observation;
    Ok((
        SweepReport {
            description: format!("wave observation on ({lo}, {hi}) over T = {}", model.t_final),
            levels,
            verdict,
            rule,
            note: HEURISTIC_NOTE,
        },
        reports,
    ))
}
