use beamtrack::duality::{
    coupling_matrices, extract_consensus_duals, solve_power_allocation, solve_uplink_fixed_point,
    uplink_update, DualOptions, Outcome,
};
use beamtrack::model::{
    exact_consistency, inner, ChannelSet, ConsensusIndex, QosSpec, Scenario, Topology,
};
use beamtrack::socp::{solve_centralized, Cone, ConeProgram, SolveStatus, SolverOptions};
use beamtrack::tracks::sample_initial;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn opts() -> DualOptions {
    DualOptions::default()
}

fn reference() -> Scenario {
    Scenario::uniform(2, 2, 4, 10.0, 10.0).unwrap()
}

fn oracle(h: &ChannelSet, s: &Scenario) -> beamtrack::duality::DualSolution {
    solve_uplink_fixed_point(h, s, &opts()).unwrap().feasible().expect("feasible instance")
}

#[test]
fn single_user_closed_form() {
    let s = Scenario::uniform(1, 1, 4, 10.0, 10.0).unwrap();
    let mut h = ChannelSet::for_topology(&s.topology);
    h.get_mut(0, 0)[0] = Complex64::new(1.0, 0.0);
    let d = oracle(&h, &s);
    // unit-noise multiplier gamma / ||h||^2, power gamma sigma^2 / ||h||^2
    assert!((d.lambda[0] - 10.0).abs() < 1e-12);
    assert!((d.total_power() - 100.0).abs() < 1e-9);
    assert!((d.dual_objective(&s) - 100.0).abs() < 1e-9);
    let dir = d.directions.get(0);
    assert!((dir[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    assert!(dir[1..].iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn strong_duality_and_socp_agreement() {
    let s = reference();
    let mut checked = 0;
    for seed in 0..40 {
        let h = sample_initial(&s.topology, seed);
        let Outcome::Feasible(d) = solve_uplink_fixed_point(&h, &s, &opts()).unwrap() else {
            continue;
        };
        let p = d.total_power();
        assert!((d.dual_objective(&s) - p).abs() <= 1e-5 * p.max(1.0), "seed {seed}");
        let (report, w) = solve_centralized(&h, &s, &SolverOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal, "seed {seed}");
        let w = w.unwrap();
        assert!((w.total_power() - p).abs() <= 1e-5 * p, "seed {seed}: {} vs {p}", w.total_power());
        // unit directions agree under the common phase convention
        for k in 0..s.topology.users() {
            let norm = w.power(k).sqrt();
            let diff: f64 = w
                .get(k)
                .iter()
                .zip(d.directions.get(k))
                .map(|(a, b)| (a / norm - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-4, "seed {seed} user {k}: {diff}");
            let g = inner(h.get(s.topology.serving(k), k), d.directions.get(k));
            assert!(g.re > 0.0 && g.im.abs() < 1e-9);
        }
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn decoupled_cells_match_independent_solves() {
    let s = reference();
    let mut h = sample_initial(&s.topology, 3);
    for k in 0..4 {
        let other = 1 - s.topology.serving(k);
        h.get_mut(other, k).iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    }
    let joint = oracle(&h, &s);
    let cell = Scenario::uniform(1, 2, 4, 10.0, 10.0).unwrap();
    for b in 0..2 {
        let users = s.topology.served(b);
        let mut hb = ChannelSet::for_topology(&cell.topology);
        for (slot, &k) in users.iter().enumerate() {
            hb.get_mut(0, slot).copy_from_slice(h.get(b, k));
        }
        let single = oracle(&hb, &cell);
        for (slot, &k) in users.iter().enumerate() {
            assert!((single.lambda[slot] - joint.lambda[k]).abs() <= 1e-8 * joint.lambda[k], "user {k}");
            assert!((single.powers[slot] - joint.powers[k]).abs() <= 1e-8 * joint.powers[k], "user {k}");
        }
        let (report, w) = solve_centralized(&hb, &cell, &SolverOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Optimal);
        let cell_power: f64 = users.iter().map(|&k| joint.powers[k]).sum();
        assert!((w.unwrap().total_power() - cell_power).abs() <= 1e-6 * cell_power);
    }
    // no intercell interference, so the optimal consensus duals vanish
    let index = ConsensusIndex::build(&s.topology);
    let tau = exact_consistency(&joint.w_star, &h, &s.topology, &index);
    let nu = extract_consensus_duals(&joint.lambda, &tau, &index);
    assert!(nu.iter().all(|v| v.abs() < 1e-12));
}

/// `A^T y = 0`, `b^T y = -1`, `y` in the dual cone.
fn assert_certificate(prog: &ConeProgram, y: &DVector<f64>) {
    assert!((prog.a.transpose() * y).norm() < 1e-7);
    assert!((prog.b.dot(y) + 1.0).abs() < 1e-7);
    let mut row = 0;
    for cone in &prog.cones {
        let yb = y.rows(row, cone.dim());
        match cone {
            Cone::NonNeg(_) => assert!(yb.min() > -1e-9),
            Cone::SecondOrder(n) => assert!(yb[0] >= yb.rows(1, n - 1).norm() - 1e-9),
            Cone::Zero(_) => {}
        }
        row += cone.dim();
    }
}

#[test]
fn identical_channels_are_infeasible_for_both_oracles() {
    // three users on two antennas with the same channel and gamma = 10
    let s = Scenario::new(
        Topology::new(1, 2, vec![0, 0, 0]).unwrap(),
        QosSpec::uniform(3, 10.0, 1.0).unwrap(),
    )
    .unwrap();
    let mut h = ChannelSet::for_topology(&s.topology);
    for k in 0..3 {
        h.get_mut(0, k).copy_from_slice(&[Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2)]);
    }
    assert_eq!(solve_uplink_fixed_point(&h, &s, &opts()).unwrap(), Outcome::Infeasible);
    let (prog, _) = beamtrack::socp::build_centralized(&h, &s).unwrap();
    let r = beamtrack::socp::solve(&prog, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert_certificate(&prog, &r.y);
}

#[test]
fn feasibility_verdicts_agree_with_the_conic_solver() {
    // about half of these instances are infeasible
    let s = Scenario::uniform(2, 2, 2, 1.0, 10.0).unwrap();
    let (mut yes, mut no) = (0, 0);
    for seed in 0..100 {
        let h = sample_initial(&s.topology, seed);
        let dual = solve_uplink_fixed_point(&h, &s, &opts()).unwrap().is_feasible();
        let (r, _) = solve_centralized(&h, &s, &SolverOptions::default()).unwrap();
        assert!(
            matches!(r.status, SolveStatus::Optimal | SolveStatus::Infeasible),
            "seed {seed}: {:?}",
            r.status
        );
        assert_eq!(dual, r.status == SolveStatus::Optimal, "seed {seed}");
        if dual {
            yes += 1;
        } else {
            no += 1;
        }
    }
    assert!(yes > 0 && no > 0, "{yes} feasible, {no} infeasible");
}

#[test]
fn fixed_point_iterates_are_nondecreasing() {
    let s = reference();
    for seed in [1, 2, 5] {
        let h = sample_initial(&s.topology, seed);
        let mut lambda = vec![0.0; 4];
        for _ in 0..200 {
            let next = uplink_update(&h, &s, &lambda).unwrap();
            for (a, b) in next.iter().zip(&lambda) {
                assert!(*a >= b * (1.0 - 1e-12), "seed {seed}: {a} < {b}");
            }
            lambda = next;
        }
    }
}

#[test]
fn power_allocation_solves_the_linear_system() {
    let s = reference();
    for seed in 0..10 {
        let h = sample_initial(&s.topology, seed);
        let Outcome::Feasible(d) = solve_uplink_fixed_point(&h, &s, &opts()).unwrap() else {
            continue;
        };
        let c = coupling_matrices(&d.directions, &h, &s).unwrap();
        let p = DVector::from_vec(solve_power_allocation(&d.directions, &h, &s).unwrap().feasible().unwrap());
        let dsig = c.d.component_mul(&c.sigma2);
        let lhs = (DMatrix::identity(4, 4) - c.gain_matrix()) * &p;
        assert!((lhs - &dsig).norm() <= 1e-10 * dsig.norm(), "seed {seed}");
        // every target met with equality
        let sinr = beamtrack::model::compute_all_sinr(&d.w_star, &h, &s).unwrap();
        assert!(sinr.iter().all(|v| (v - 10.0).abs() < 1e-8), "{sinr:?}");
    }
}

#[test]
fn consensus_duals_balance() {
    let s = reference();
    let index = ConsensusIndex::build(&s.topology);
    let h = sample_initial(&s.topology, 4);
    let d = oracle(&h, &s);
    let tau = exact_consistency(&d.w_star, &h, &s.topology, &index);
    let nu = extract_consensus_duals(&d.lambda, &tau, &index);
    assert!(index.transpose_apply(&nu).iter().all(|v| *v == 0.0));
    assert!(nu.iter().any(|v| v.abs() > 1e-6));
}
