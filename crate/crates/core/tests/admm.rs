use beamtrack::acceptance::{feasible_instances, reference_scenario};
use beamtrack::admm::{
    admm_step, check_decrease, check_decrease_updated, lyapunov_of, solve_static, AdmmConfig, AdmmState,
};
use beamtrack::duality::{consensus_reference, solve_uplink_fixed_point, DualOptions, DualSolution};
use beamtrack::exec::Execution;
use beamtrack::model::{compute_all_sinr, ChannelSet, ConsensusIndex, InterferenceState, Scenario};
use num_complex::Complex64;

fn oracle(h: &ChannelSet, s: &Scenario) -> DualSolution {
    solve_uplink_fixed_point(h, s, &DualOptions::default()).unwrap().feasible().unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

#[test]
fn optimum_is_a_fixed_point() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    for (seed, h) in feasible_instances(&s, 0, 5) {
        let d = oracle(&h, &s);
        let star = consensus_reference(&d, &h, &s, &index);
        for rho in [1.0, 50.0, 1000.0] {
            let cfg = AdmmConfig::with_rho(rho);
            let start = AdmmState::from_reference(&s, &index, star.tau.clone(), star.nu.clone());
            let (next, rec) = admm_step(&start, &h, &s, &index, &cfg).unwrap();
            let v = lyapunov_of(&next.vars, &star, rho, &index);
            assert!(v < 1e-6 * d.total_power(), "seed {seed} rho {rho}: V = {v}");
            assert!(rec.w.distance_sq(&d.w_star) < 1e-6 * d.total_power(), "seed {seed} rho {rho}");
        }
    }
}

#[test]
fn decoupled_cells_settle_in_one_iteration() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let mut h = feasible_instances(&s, 0, 1).remove(0).1;
    for k in 0..s.topology.users() {
        let other = 1 - s.topology.serving(k);
        h.get_mut(other, k).iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }
    let d = oracle(&h, &s);
    let cfg = AdmmConfig::default();
    let (next, rec) = admm_step(&AdmmState::initial(&s, &index), &h, &s, &index, &cfg).unwrap();
    // interior-point copies stop just inside the cone, not at exactly zero
    assert!(max_abs(&next.vars.t) < 1e-4, "{:?}", next.vars.t);
    assert!(max_abs(&next.vars.tau) < 1e-4);
    assert!((rec.total_power - d.total_power()).abs() <= 1e-6 * d.total_power());
    assert!(rec.sinr.iter().all(|v| *v >= 10.0 - 1e-5), "{:?}", rec.sinr);
}

#[test]
fn static_solution_meets_targets_at_optimal_power() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    for (seed, h) in feasible_instances(&s, 0, 5) {
        let d = oracle(&h, &s);
        let sol = solve_static(&h, &s, &index, &AdmmConfig::default()).unwrap();
        let sinr = compute_all_sinr(&sol.w, &h, &s).unwrap();
        assert!(sinr.iter().all(|v| *v >= 10.0 - 1e-4), "seed {seed}: {sinr:?}");
        let p = sol.w.total_power();
        assert!((p - d.total_power()).abs() <= 1e-4 * d.total_power(), "seed {seed}: {p} vs {}", d.total_power());
        assert!(sol.w.distance_sq(&d.w_star).sqrt() <= 1e-3, "seed {seed}");
    }
}

#[test]
fn reference_matches_static_limit() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let cfg = AdmmConfig::default();
    for (seed, h) in feasible_instances(&s, 0, 3) {
        let star = consensus_reference(&oracle(&h, &s), &h, &s, &index);
        let mut state = AdmmState::initial(&s, &index);
        for _ in 0..300 {
            state = admm_step(&state, &h, &s, &index, &cfg).unwrap().0;
        }
        // the limit sits on a floor set by the local solve accuracy
        let tau_err = max_abs_diff(&state.vars.tau, &star.tau) / max_abs(&star.tau).max(1.0);
        let nu_err = max_abs_diff(&state.vars.nu, &star.nu) / max_abs(&star.nu).max(1.0);
        assert!(tau_err <= 1e-4, "seed {seed}: tau off by {tau_err}");
        assert!(nu_err <= 1e-4, "seed {seed}: nu off by {nu_err}");
    }
}

#[test]
fn duals_stay_balanced() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 10, 1).remove(0).1;
    let mut state = AdmmState::initial(&s, &index);
    for _ in 0..30 {
        let (next, rec) = admm_step(&state, &h, &s, &index, &AdmmConfig::default()).unwrap();
        assert!(rec.dual_balance <= 1e-9 * max_abs(&rec.vars.nu).max(1.0), "{}", rec.dual_balance);
        state = next;
    }
}

#[test]
fn skewed_averaging_breaks_the_balance() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 10, 1).remove(0).1;
    let cfg = AdmmConfig {
        averaging_skew: 0.1,
        ..AdmmConfig::default()
    };
    let (_, rec) = admm_step(&AdmmState::initial(&s, &index), &h, &s, &index, &cfg).unwrap();
    assert!(rec.dual_balance > 1e-3, "{}", rec.dual_balance);
}

#[test]
fn execution_modes_agree() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 20, 1).remove(0).1;
    let run = |execution| {
        let cfg = AdmmConfig {
            execution,
            ..AdmmConfig::default()
        };
        let mut state = AdmmState::initial(&s, &index);
        let mut records = Vec::new();
        for _ in 0..10 {
            let (next, rec) = admm_step(&state, &h, &s, &index, &cfg).unwrap();
            records.push(rec);
            state = next;
        }
        records
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

#[test]
fn residuals_decompose_orthogonally() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 30, 1).remove(0).1;
    let mut state = AdmmState::initial(&s, &index);
    for _ in 0..20 {
        let (next, rec) = admm_step(&state, &h, &s, &index, &AdmmConfig::default()).unwrap();
        let lhs = rec.primal_residual.powi(2);
        let rhs = rec.consensus_residual.powi(2) + rec.dual_change.powi(2);
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0), "{lhs} vs {rhs}");
        state = next;
    }
}

#[test]
fn lyapunov_decreases_along_static_iterations() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let cfg = AdmmConfig::default();
    for (seed, h) in feasible_instances(&s, 40, 3) {
        let star = consensus_reference(&oracle(&h, &s), &h, &s, &index);
        let mut state = AdmmState::initial(&s, &index);
        let mut v_prev = lyapunov_of(&state.vars, &star, cfg.rho, &index);
        for i in 0..40 {
            let (next, rec) = admm_step(&state, &h, &s, &index, &cfg).unwrap();
            let v = lyapunov_of(&next.vars, &star, cfg.rho, &index);
            assert!(check_decrease_updated(v_prev, v, &rec, cfg.rho), "seed {seed} iteration {i}");
            v_prev = v;
            state = next;
        }
    }
}

#[test]
fn decrease_check_rejects_an_increase() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 0, 1).remove(0).1;
    let (_, rec) = admm_step(&AdmmState::initial(&s, &index), &h, &s, &index, &AdmmConfig::default()).unwrap();
    assert!(!check_decrease(10.0, 11.0, &rec, 50.0));
    assert!(!check_decrease_updated(10.0, 11.0, &rec, 50.0));
    let zero = InterferenceState::zeros(&index);
    let mut still = rec.clone();
    still.vars = zero;
    still.primal_residual = 0.0;
    still.consensus_residual = 0.0;
    still.dual_change = 0.0;
    assert!(check_decrease(10.0, 10.0, &still, 50.0));
}

#[test]
fn invalid_rho_is_rejected() {
    let s = reference_scenario();
    let index = ConsensusIndex::build(&s.topology);
    let h = feasible_instances(&s, 0, 1).remove(0).1;
    for rho in [0.0, -1.0, f64::NAN] {
        assert!(admm_step(&AdmmState::initial(&s, &index), &h, &s, &index, &AdmmConfig::with_rho(rho)).is_err());
    }
}
