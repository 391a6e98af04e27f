use fcopt_core::control::elliptic::{elliptic_estimate_constant, EllipticSystem, SpacePair};
use fcopt_core::control::evolution::{
    adjoint_evolution, evolution_duality_residual, maximum_principle_residual, simulate_variation_evolution,
    spike_variation, EvolutionSystem, FiniteControls, Hamiltonian, LqEndpoint, QuadraticHamiltonian,
};
use fcopt_core::control::tree::{
    control_kernel, ito_integral, rank_deficiency_witness, sde_duality_residual, sde_estimate_constant,
    simulate_forward, tree_bsde_solve, BsdeScheme, InitialObservation, Process, TreeModel, DEFAULT_DIM_CAP,
};
use fcopt_core::control::wave::{observation_gramian, wave_observability_constant, wave_sweep, WaveModel};
use fcopt_core::diagnostics::{classify_growth, Constant, GrowthRule, LevelReport, Verdict};
use fcopt_core::numeric::uniform_matrix;
use fcopt_core::penalty::{extract_multiplier, ConstrainedProblem, MultiplierPair, PenaltyConfig};
use fcopt_core::spaces::{LinearMap, SpaceDescriptor};
use fcopt_core::FcError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vecs(seed: u64, count: usize, dim: usize) -> Vec<DVector<f64>> {
    let m = uniform_matrix(seed, dim, count, 1.0);
    (0..count).map(|k| m.column(k).into_owned()).collect()
}

fn tree_process(seed: u64, depth: usize, dim: usize) -> Process {
    (0..depth)
        .map(|j| vecs(seed + j as u64, 1 << j, dim))
        .collect()
}

// evolution

#[test]
fn scalar_integration_is_exact() {
    let sys = EvolutionSystem::time_invariant(1.0, 40, DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
    let xi = simulate_variation_evolution(&sys, &vec![DVector::from_element(1, 1.0); 40]).unwrap();
    assert!((xi[40][0] - 1.0).abs() < 1e-13);
}

#[test]
fn rotation_matches_variation_of_constants() {
    let steps = 10_000;
    let t = 2.0;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let sys = EvolutionSystem::time_invariant(t, steps, a, DMatrix::identity(2, 2)).unwrap();
    let h = t / steps as f64;
    let w: Vec<DVector<f64>> = (0..steps)
        .map(|k| {
            let s = k as f64 * h;
            DVector::from_vec(vec![(3.0 * s).cos(), 1.0 - s])
        })
        .collect();
    let xi = sys.simulate(&w).unwrap();
    // exp(A s) is a rotation; integrate each piecewise constant input exactly
    let rot = |s: f64| DMatrix::from_row_slice(2, 2, &[s.cos(), s.sin(), -s.sin(), s.cos()]);
    let block = DMatrix::from_row_slice(2, 2, &[h.sin(), 1.0 - h.cos(), h.cos() - 1.0, h.sin()]);
    let mut exact = DVector::zeros(2);
    for (k, wk) in w.iter().enumerate() {
        exact += rot(t - (k + 1) as f64 * h) * &block * wk;
    }
    let rel = (&xi[steps] - &exact).norm() / exact.norm();
    assert!(rel <= 1e-6, "relative error {rel:e}");
}

#[test]
fn response_is_linear_in_the_input() {
    let sys = EvolutionSystem::time_invariant(1.0, 30, uniform_matrix(1, 3, 3, 1.0), uniform_matrix(2, 3, 2, 1.0)).unwrap();
    let (w1, w2) = (vecs(3, 30, 2), vecs(4, 30, 2));
    let comb: Vec<DVector<f64>> = w1.iter().zip(&w2).map(|(a, b)| a * 2.0 - b).collect();
    let (x1, x2, xc) = (sys.simulate(&w1).unwrap(), sys.simulate(&w2).unwrap(), sys.simulate(&comb).unwrap());
    assert!((&xc[30] - (&x1[30] * 2.0 - &x2[30])).norm() < 1e-13);
    let flat = DVector::from_iterator(60, w1.iter().flat_map(|v| v.iter().copied()));
    assert!((sys.endpoint_matrix() * flat - &x1[30]).norm() < 1e-13);
}

#[test]
fn spike_variation_examples() {
    let sys = EvolutionSystem::time_invariant(2.0, 20, DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
    let zero = spike_variation(&sys, &vec![DVector::zeros(1); 20], &[0.0; 20]).unwrap();
    assert_eq!((zero.xi0, zero.xi[0]), (0.0, 0.0));
    // y' = u, u_bar = 0, v = 1: drift difference 1 per step
    let push = spike_variation(&sys, &vec![DVector::from_element(1, 1.0); 20], &[0.0; 20]).unwrap();
    assert!((push.xi[0] - 1.0).abs() < 1e-13);
    // g = u: cost difference 1 per step, no drift change
    let cost = spike_variation(&sys, &vec![DVector::zeros(1); 20], &[1.0; 20]).unwrap();
    assert!((cost.xi0 - 1.0).abs() < 1e-13);
    assert_eq!(cost.xi[0], 0.0);
}

#[test]
fn adjoint_trivial_cases() {
    let sys = EvolutionSystem::time_invariant(1.0, 8, uniform_matrix(5, 2, 2, 1.0), DMatrix::identity(2, 2))
        .unwrap()
        .with_cost_gradients(vecs(6, 8, 2), vecs(7, 8, 2))
        .unwrap();
    let adj = adjoint_evolution(&sys, 0.0, &DVector::zeros(2)).unwrap();
    assert!(adj.lambda.iter().chain(&adj.mu).all(|v| v.amax() == 0.0));
}

#[test]
fn evolution_duality_on_random_instances() {
    for seed in 0..20u64 {
        let n = 2 + (seed % 4) as usize;
        let m = 1 + (seed % 3) as usize;
        let steps = 15 + seed as usize;
        let drift = (0..steps).map(|k| uniform_matrix(seed * 1000 + k as u64, n, n, 2.0)).collect();
        let control = (0..steps).map(|k| uniform_matrix(seed * 1000 + 500 + k as u64, n, m, 1.0)).collect();
        let sys = EvolutionSystem::new(1.5, drift, control).unwrap();
        let w = vecs(seed + 77, steps, m);
        let phi = vecs(seed + 99, 1, n).remove(0);
        let r = evolution_duality_residual(&sys, &w, &phi).unwrap();
        assert!(r <= 1e-12, "seed {seed}: residual {r:e}");
    }
}

fn lq(seed: u64) -> LqEndpoint {
    let (n, m, steps) = (4, 2, 50);
    LqEndpoint {
        system: EvolutionSystem::time_invariant(1.0, steps, uniform_matrix(seed, n, n, 1.0), uniform_matrix(seed + 1, n, m, 1.0))
            .unwrap(),
        state_weight: DMatrix::identity(n, n),
        control_weight: DMatrix::identity(m, m),
        initial: DVector::from_vec(vec![0.5, 0.0, -0.25, 0.125]),
        target: DVector::from_vec(vec![0.0, 0.25, 0.0, -0.25]),
    }
}

#[test]
fn lq_oracle_multiplier_satisfies_stationarity() {
    let sol = lq(21).build().unwrap();
    let pair = &sol.kkt.pair;
    assert!(pair.z0 > 0.0);
    let adj = adjoint_evolution(&sol.system, pair.z0, &pair.z).unwrap();
    let h = QuadraticHamiltonian {
        system: &sol.system,
        control_weight: DMatrix::identity(2, 2),
        z0: pair.z0,
    };
    let report = maximum_principle_residual(&sol.system, pair, &adj, &h, &sol.controls, &FiniteControls(vec![]), 0, 1).unwrap();
    assert!(report.valid);
    assert!(report.stationarity <= 1e-8, "stationarity {:e}", report.stationarity);
}

#[test]
fn lq_pipeline_recovers_the_oracle_multiplier() {
    let sol = lq(21).build().unwrap();
    let cfg = PenaltyConfig::default();
    let ex = extract_multiplier(&sol.problem, &sol.kkt.u, &cfg.schedule().unwrap(), &cfg).unwrap();
    let (got, want) = (&ex.pair, &sol.kkt.pair);
    let gv = DVector::from_iterator(5, std::iter::once(got.z0).chain(got.z.iter().copied()));
    let wv = DVector::from_iterator(5, std::iter::once(want.z0).chain(want.z.iter().copied()));
    assert!((&gv - &wv).norm() / wv.norm() <= 1e-4, "{gv} vs {wv}");
    assert!(got.z0 >= 0.1, "z0 = {}", got.z0);
}

#[test]
fn trivial_pair_is_flagged_invalid() {
    let sol = lq(3).build().unwrap();
    let zero = MultiplierPair {
        z0: 0.0,
        z: DVector::zeros(4),
    };
    let adj = adjoint_evolution(&sol.system, 0.0, &zero.z).unwrap();
    let h = QuadraticHamiltonian {
        system: &sol.system,
        control_weight: DMatrix::identity(2, 2),
        z0: 0.0,
    };
    let r = maximum_principle_residual(&sol.system, &zero, &adj, &h, &sol.controls, &FiniteControls(vec![]), 0, 1).unwrap();
    assert!(!r.valid);
    assert_eq!(r.stationarity, 0.0);
    assert_eq!(r.hamiltonian_gap, 0.0);
}

struct Linear<'a>(&'a EvolutionSystem);

impl Hamiltonian for Linear<'_> {
    fn value(&self, step: usize, psi: &DVector<f64>, u: &DVector<f64>) -> f64 {
        psi.dot(&(self.0.control_matrix(step) * u))
    }
}

#[test]
fn bang_bang_follows_the_sign_rule() {
    let sys = EvolutionSystem::time_invariant(1.0, 40, DMatrix::from_element(1, 1, 0.7), DMatrix::identity(1, 1)).unwrap();
    let pair = MultiplierPair {
        z0: 0.0,
        z: DVector::from_element(1, -1.0),
    };
    let adj = adjoint_evolution(&sys, pair.z0, &pair.z).unwrap();
    let sign_rule: Vec<DVector<f64>> = adj.mu.iter().map(|m| DVector::from_element(1, m[0].signum())).collect();
    let set = FiniteControls(vec![DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)]);
    let r = maximum_principle_residual(&sys, &pair, &adj, &Linear(&sys), &sign_rule, &set, 0, 1).unwrap();
    assert_eq!(r.hamiltonian_gap, 0.0);
    let flipped: Vec<DVector<f64>> = sign_rule.iter().map(|u| -u).collect();
    let r = maximum_principle_residual(&sys, &pair, &adj, &Linear(&sys), &flipped, &set, 0, 1).unwrap();
    assert!(r.hamiltonian_gap > 0.0);
}

#[test]
fn endpoint_map_is_onto_when_the_gramian_is_definite() {
    let sol = lq(21).build().unwrap();
    let sys = &sol.system;
    let e = sys.endpoint_matrix();
    // discrete controllability Gramian in the dt-weighted control geometry
    let gram = &e * e.transpose() / sys.dt();
    let lmin = gram.symmetric_eigen().eigenvalues.min();
    assert!(lmin > 0.0);
    let control = sol.problem.control_space().clone();
    let s = LinearMap::new(e, control, SpaceDescriptor::identity("x", 4).unwrap()).unwrap().singular_values();
    assert!((s[3] - lmin.sqrt()).abs() <= 1e-10 * s[0]);
}

// elliptic

#[test]
fn l2_constant_matches_top_laplacian_eigenvalue() {
    let mut values = Vec::new();
    for n in [15usize, 31, 63, 127] {
        let sys = EllipticSystem::laplacian(n, SpacePair::L2L2).unwrap();
        let h = sys.mesh_size();
        let expected = 4.0 / (h * h) * (n as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2);
        let c = elliptic_estimate_constant(&sys).unwrap().estimate.constant.value();
        assert!((c - expected).abs() <= 1e-9 * expected, "n={n}: {c} vs {expected}");
        values.push((n, c));
    }
    for w in values.windows(2) {
        assert!(w[1].1 / w[0].1 >= 3.0);
    }
}

#[test]
fn h1_constant_is_one() {
    for n in [15usize, 31, 63, 127] {
        let r = elliptic_estimate_constant(&EllipticSystem::laplacian(n, SpacePair::H1Hm1).unwrap()).unwrap();
        assert!((r.estimate.constant.value() - 1.0).abs() < 1e-9);
        assert!(!r.indefinite);
    }
}

#[test]
fn elliptic_sweeps_split() {
    let sweep = |pair| {
        let levels: Vec<LevelReport> = [15usize, 31, 63, 127]
            .iter()
            .map(|&n| LevelReport {
                n: n + 1,
                report: elliptic_estimate_constant(&EllipticSystem::laplacian(n, pair).unwrap()).unwrap().estimate,
            })
            .collect();
        classify_growth(&levels, GrowthRule::default())
    };
    assert_eq!(sweep(SpacePair::L2L2), Verdict::Growing);
    assert_eq!(sweep(SpacePair::H1Hm1), Verdict::Bounded);
}

// tree

#[test]
fn last_step_increment_is_represented() {
    let d = 3;
    let z = DMatrix::zeros(1, 1);
    let model = TreeModel::time_invariant(d, 1.0, z.clone(), z.clone(), z.clone(), z).unwrap();
    let root = model.dt().sqrt();
    let terminal: Vec<DVector<f64>> = (0..8).map(|l| DVector::from_element(1, if l % 2 == 0 { root } else { -root })).collect();
    let sol = tree_bsde_solve(&model, 0.0, None, &terminal).unwrap();
    assert!(sol.phi[d - 1].iter().all(|v| v[0].abs() < 1e-15));
    assert!(sol.big_phi[d - 1].iter().all(|v| (v[0] - 1.0).abs() < 1e-15));
    assert!(sol.big_phi[0].iter().all(|v| v[0].abs() < 1e-15));
}

#[test]
fn deterministic_terminal_value_stays_put() {
    let z = DMatrix::zeros(2, 2);
    let model = TreeModel::time_invariant(4, 1.0, z.clone(), z.clone(), z.clone(), z).unwrap();
    let c = DVector::from_vec(vec![0.3, -1.2]);
    let sol = tree_bsde_solve(&model, 0.0, None, &vec![c.clone(); 16]).unwrap();
    assert!(sol.phi.iter().flatten().all(|v| (v - &c).norm() < 1e-15));
    assert!(sol.big_phi.iter().flatten().all(|v| v.norm() < 1e-15));
}

#[test]
fn scalar_drift_gives_a_geometric_recursion() {
    let (d, lam, c) = (6, 0.8, 2.0);
    let z = DMatrix::zeros(1, 1);
    let model = TreeModel::time_invariant(d, 1.0, DMatrix::from_element(1, 1, lam), z.clone(), z.clone(), z).unwrap();
    let sol = tree_bsde_solve(&model, 0.0, None, &vec![DVector::from_element(1, c); 64]).unwrap();
    let dt = model.dt();
    for j in 0..=d {
        let expected = c / (1.0 - lam * dt).powi((d - j) as i32);
        assert!(sol.phi[j].iter().all(|v| (v[0] - expected).abs() < 1e-13 * expected));
    }
}

fn random_tree(seed: u64, depth: usize, n: usize, m: usize, scheme: BsdeScheme) -> TreeModel {
    let per = |s: u64, r: usize, c: usize| (0..depth).map(|j| uniform_matrix(s * 100 + j as u64, r, c, 1.0)).collect();
    TreeModel::new(depth, 1.0, per(seed, n, n), per(seed + 1, n, n), per(seed + 2, n, m), per(seed + 3, n, m))
        .unwrap()
        .with_scheme(scheme)
        .unwrap()
}

#[test]
fn tree_duality_on_random_instances() {
    for seed in 0..20u64 {
        let scheme = if seed % 2 == 0 { BsdeScheme::Implicit } else { BsdeScheme::Explicit };
        let (n, m) = (1 + (seed % 3) as usize, 1 + (seed % 2) as usize);
        let d = 6;
        let model = random_tree(seed * 10, d, n, m, scheme);
        let u = tree_process(seed + 1000, d, m);
        let terminal = vecs(seed + 2000, 1 << d, n);
        let r = sde_duality_residual(&model, &u, &terminal).unwrap();
        assert!(r <= 1e-12, "seed {seed}: residual {r:e}");
    }
}

#[test]
fn duality_sides_vanish_together() {
    let model = random_tree(5, 4, 2, 2, BsdeScheme::Implicit);
    let zero_u: Process = (0..4).map(|j| vec![DVector::zeros(2); 1 << j]).collect();
    let xi = simulate_forward(&model, &zero_u).unwrap();
    assert!(xi.iter().flatten().all(|v| v.amax() == 0.0));
    assert_eq!(sde_duality_residual(&model, &zero_u, &vecs(1, 16, 2)).unwrap(), 0.0);
    let z = DMatrix::zeros(2, 2);
    let silent = TreeModel::time_invariant(4, 1.0, uniform_matrix(1, 2, 2, 1.0), uniform_matrix(2, 2, 2, 1.0), z.clone(), z).unwrap();
    assert_eq!(sde_duality_residual(&silent, &tree_process(3, 4, 2), &vecs(1, 16, 2)).unwrap(), 0.0);
}

#[test]
fn ito_isometry_holds_exactly() {
    let (d, dt) = (8, 1.0 / 8.0);
    let r = tree_process(42, d, 3);
    let leaves = ito_integral(d, dt, &r).unwrap();
    let lhs = leaves.iter().map(|v| v.norm_squared()).sum::<f64>() / leaves.len() as f64;
    let rhs: f64 = r
        .iter()
        .map(|level| dt * level.iter().map(|v| v.norm_squared()).sum::<f64>() / level.len() as f64)
        .sum();
    assert!((lhs - rhs).abs() <= 1e-13 * rhs);
    let mean = leaves.iter().fold(DVector::zeros(3), |acc, v| acc + v) / leaves.len() as f64;
    assert!(mean.norm() < 1e-14);
}

#[test]
fn two_leaf_constant_by_hand() {
    let z = DMatrix::zeros(1, 1);
    let one = DMatrix::identity(1, 1);
    let model = TreeModel::time_invariant(1, 1.0, z.clone(), z.clone(), z, one).unwrap();
    // observed rows: sqrt(dt) Phi_0 = (x1 - x2) / 2 and phi_0 = (x1 + x2) / 2,
    // against E|phi_T|^2 = (x1^2 + x2^2) / 2
    let with = sde_estimate_constant(&model, InitialObservation::Phi0, DEFAULT_DIM_CAP).unwrap();
    assert!((with.full.constant.value() - 1.0).abs() < 1e-14);
    let without = sde_estimate_constant(&model, InitialObservation::None, DEFAULT_DIM_CAP).unwrap();
    assert_eq!(without.full.constant, Constant::Infinite);
    assert_eq!(without.full.kernel_dim, 1);
    assert!((without.restricted.constant.value() - 1.0).abs() < 1e-14);
}

#[test]
fn estimate_dimension_cap() {
    let model = random_tree(1, 8, 2, 2, BsdeScheme::Implicit);
    assert!(matches!(
        sde_estimate_constant(&model, InitialObservation::Phi0, 100),
        Err(FcError::Resource(_))
    ));
}

fn rank_model(depth: usize, c2: DMatrix<f64>) -> TreeModel {
    TreeModel::time_invariant(
        depth,
        1.0,
        uniform_matrix(11, 2, 2, 1.0),
        uniform_matrix(12, 2, 2, 1.0),
        DMatrix::identity(2, 2),
        c2,
    )
    .unwrap()
}

fn deficient() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))
}

#[test]
fn full_rank_noise_gives_bounded_constants() {
    let c: Vec<f64> = (4..=8)
        .map(|d| {
            sde_estimate_constant(&rank_model(d, DMatrix::identity(2, 2)), InitialObservation::Phi0, DEFAULT_DIM_CAP)
                .unwrap()
                .full
                .constant
                .value()
        })
        .collect();
    let max = c.iter().copied().fold(0.0, f64::max);
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max <= 2.0 * min, "{c:?}");
}

#[test]
fn deficient_noise_loses_the_estimate() {
    let levels: Vec<LevelReport> = (4..=8)
        .map(|d| {
            let e = sde_estimate_constant(&rank_model(d, deficient()), InitialObservation::Phi0, DEFAULT_DIM_CAP).unwrap();
            LevelReport {
                n: 1 << d,
                report: e.full,
            }
        })
        .collect();
    assert!(levels.iter().all(|l| !l.report.constant.is_finite()));
    assert!(levels.windows(2).all(|w| w[1].report.kernel_dim > w[0].report.kernel_dim));
    assert_eq!(classify_growth(&levels, GrowthRule::default()), Verdict::Growing);
}

#[test]
fn witness_window_energy() {
    // no drift and no C1: psi(T) is an Ito integral over the window
    let z = DMatrix::zeros(2, 2);
    let d = 8;
    let model = TreeModel::time_invariant(d, 1.0, z.clone(), z.clone(), z, deficient()).unwrap();
    let r = DVector::from_vec(vec![0.0, 1.0]);
    for k in [1, 2, 4, 8] {
        let w = rank_deficiency_witness(&model, &r, k).unwrap();
        assert!((w.terminal_energy - 1.0).abs() < 1e-13);
        assert_eq!(w.observed_energy, 0.0);
        assert_eq!(w.window_steps, d.div_ceil(k));
    }
}

#[test]
fn witness_observation_shrinks_with_k() {
    let model = TreeModel::time_invariant(
        16,
        1.0,
        uniform_matrix(11, 2, 2, 1.0),
        uniform_matrix(12, 2, 2, 1.0),
        uniform_matrix(13, 2, 2, 1.0),
        deficient(),
    )
    .unwrap();
    let r = DVector::from_vec(vec![0.0, 1.0]);
    let reports: Vec<_> = [1, 2, 4, 8].iter().map(|&k| rank_deficiency_witness(&model, &r, k).unwrap()).collect();
    for w in reports.windows(2) {
        assert!(w[1].observed_energy * w[1].k as f64 <= w[0].observed_energy * w[0].k as f64);
        assert!(w[1].r_norm_sq / w[1].observed_energy > w[0].r_norm_sq / w[0].observed_energy);
    }
}

#[test]
fn witness_preconditions() {
    let model = rank_model(4, deficient());
    assert!(matches!(
        rank_deficiency_witness(&model, &DVector::zeros(2), 1),
        Err(FcError::Precondition(_))
    ));
    assert!(matches!(
        rank_deficiency_witness(&model, &DVector::from_vec(vec![1.0, 0.0]), 1),
        Err(FcError::Precondition(_))
    ));
    let full = rank_model(4, DMatrix::identity(2, 2));
    assert!(control_kernel(&full).is_empty());
    assert_eq!(control_kernel(&model).len(), 1);
}

// wave

#[test]
fn full_observation_constant() {
    let r = wave_observability_constant(&WaveModel::new(16, (0.0, 1.0), 1.0, 0.0).unwrap(), &[]).unwrap();
    assert!((r.estimate.constant.value() - 2f64.sqrt()).abs() < 1e-9);
    let g = observation_gramian(&WaveModel::new(5, (0.0, 1.0), 1.0, 0.0).unwrap()).unwrap();
    assert!((g - DMatrix::identity(10, 10) * 0.5).amax() < 1e-12);
}

#[test]
fn long_horizon_observation_is_bounded() {
    let base = WaveModel::new(8, (0.4, 0.6), 3.0, 0.0).unwrap();
    let (sweep, reports) = wave_sweep(&base, &[8, 16, 32, 64], &[], GrowthRule::default()).unwrap();
    assert_eq!(sweep.verdict, Verdict::Bounded);
    for w in reports.windows(2) {
        assert!(w[1].estimate.constant.value() / w[0].estimate.constant.value() <= 1.2);
    }
}

#[test]
fn short_horizon_observation_grows() {
    let base = WaveModel::new(8, (0.4, 0.6), 0.2, 0.0).unwrap();
    let (sweep, reports) = wave_sweep(&base, &[8, 16, 32, 64], &[], GrowthRule::default()).unwrap();
    assert_eq!(sweep.verdict, Verdict::Growing);
    for w in reports.windows(2) {
        assert!(w[1].estimate.constant.value() >= 2.0 * w[0].estimate.constant.value());
    }
}

#[test]
fn excluding_directions_lowers_the_constant() {
    let r = wave_observability_constant(&WaveModel::new(16, (0.4, 0.6), 0.2, 0.0).unwrap(), &[0, 1, 4]).unwrap();
    let c: Vec<f64> = r.excluded.iter().map(|e| e.constant.value()).collect();
    assert_eq!(c[0], r.estimate.constant.value());
    assert!(c[0] >= c[1] && c[1] >= c[2]);
    assert!((r.worst_mode.norm() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wave_gramian_is_symmetric_psd(m in 1usize..12, lo in 0.0f64..0.5, width in 0.05f64..0.5, t in 0.1f64..3.0, a in -5.0f64..20.0) {
        let model = WaveModel::new(m, (lo, lo + width), t, a).unwrap();
        let g = observation_gramian(&model).unwrap();
        prop_assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        prop_assert!(g.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * g.amax());
    }

    #[test]
    fn tree_duality_holds(seed in 0u64..10_000, d in 1usize..7, n in 1usize..4, m in 1usize..4) {
        let model = random_tree(seed, d, n, m, BsdeScheme::Implicit);
        let r = sde_duality_residual(&model, &tree_process(seed + 1, d, m), &vecs(seed + 2, 1 << d, n)).unwrap();
        prop_assert!(r <= 1e-12);
    }
}
