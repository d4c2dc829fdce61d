//! Acceptance checks for the whole pipeline.
//!
//! [`run_acceptance`] executes every check and reports one [`CheckOutcome`]
//! per criterion; a failing check never aborts the others. Errors raised
//! inside a check are reported as failures of that check.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::admm::{check_decrease, check_decrease_updated, lyapunov_of, solve_static, AdmmConfig, AdmmState, StaticSolution};
use crate::duality::{consensus_reference, is_feasible, solve_uplink_fixed_point, DualOptions, Outcome};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::harness::{run_ensemble, ExperimentConfig, WindowStats};
use crate::model::{norm_inf, ChannelSet, ConsensusIndex, InterferenceState, Scenario};
use crate::socp::{solve, solve_centralized, Cone, ConeProgram, SolveStatus, SolverOptions};
use crate::tracks::{increment_second_moment, sample_initial, step, track_rng, TrackConfig};

/// Deliberate defects used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Consistency update weights the two copies 0.6 / 0.4 instead of
    /// averaging them.
    SkewedAveraging,
}

impl Fault {
    fn skew(self) -> f64 {
        match self {
            Fault::None => 0.0,
            Fault::SkewedAveraging => 0.1,
        }
    }
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "skewed-averaging" => Ok(Fault::SkewedAveraging),
            _ => Err(Error::InvalidParameter(format!(
                "unknown fault {s:?} (expected none or skewed-averaging)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceConfig {
    /// Tracks in the tracking ensemble.
    pub tracks: usize,
    pub seed: u64,
    pub execution: Execution,
    pub fault: Fault,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self {
            tracks: 200,
            seed: 1,
            execution: Execution::default(),
            fault: Fault::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome<E: fmt::Display>(id: &'static str, name: &'static str, res: std::result::Result<(bool, String), E>) -> CheckOutcome {
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome { id, name, passed, detail }
}

/// Setup shared by every check: 2 base stations, 2 users each, 4 antennas,
/// `gamma = 10`, `sigma^2 = 10`.
pub fn reference_scenario() -> Scenario {
    Scenario::uniform(2, 2, 4, 10.0, 10.0).expect("valid reference scenario")
}

/// The first `count` feasible channels among `sample_initial(seed)` for
/// `seed = base, base + 1, ...`, with their seeds.
pub fn feasible_instances(scenario: &Scenario, base: u64, count: usize) -> Vec<(u64, ChannelSet)> {
    (base..)
        .map(|s| (s, sample_initial(&scenario.topology, s)))
        .filter(|(_, h)| is_feasible(h, scenario))
        .take(count)
        .collect()
}

/// Random cone program with a known optimum: a strictly complementary
/// primal-dual pair is drawn first and `b`, `c` are set to match it.
/// Returns the program and its optimal value.
pub fn planted_program<R: Rng + ?Sized>(rng: &mut R) -> (ConeProgram, f64) {
    let mut cones = Vec::new();
    let z = rng.random_range(0..3);
    if z > 0 {
        cones.push(Cone::Zero(z));
    }
    for _ in 0..rng.random_range(1..4) {
        cones.push(Cone::SecondOrder(rng.random_range(2..6)));
    }
    cones.push(Cone::NonNeg(rng.random_range(1..5)));
    let m: usize = cones.iter().map(Cone::dim).sum();
    let n = rng.random_range(2..m.min(8) + 1);
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut s = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for &cone in &cones {
        match cone {
            Cone::Zero(k) => {
                s.extend(std::iter::repeat_n(0.0, k));
                y.extend((0..k).map(|_| rng.random_range(-1.0..1.0)));
            }
            Cone::NonNeg(k) => {
                for _ in 0..k {
                    let v = rng.random_range(0.5..2.0);
                    let on = rng.random::<bool>();
                    s.push(if on { v } else { 0.0 });
                    y.push(if on { 0.0 } else { v });
                }
            }
            Cone::SecondOrder(k) => {
                let mut u: Vec<f64> = (0..k - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
                let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                u.iter_mut().for_each(|v| *v /= un);
                let (a0, b0) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
                s.push(a0);
                s.extend(u.iter().map(|v| a0 * v));
                y.push(b0);
                y.extend(u.iter().map(|v| -b0 * v));
            }
        }
    }
    let b = &a * &x + DVector::from_vec(s);
    let c = -(a.transpose() * DVector::from_vec(y));
    let opt = c.dot(&x);
    (ConeProgram::new(c, a, b, cones).expect("consistent planted program"), opt)
}

/// `x >= 1` and `x <= 0`.
pub fn infeasible_orthant() -> ConeProgram {
    ConeProgram::new(
        DVector::from_vec(vec![1.0]),
        DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
        DVector::from_vec(vec![-1.0, 0.0]),
        vec![Cone::NonNeg(2)],
    )
    .expect("valid program")
}

/// `||(x1, x2)|| <= x0` with `x0 = -1`.
pub fn infeasible_cone_head() -> ConeProgram {
    ConeProgram::new(
        DVector::from_vec(vec![0.0, 1.0, 1.0]),
        DMatrix::from_row_slice(4, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 0.0, 0.0, -1.0]),
        vec![Cone::SecondOrder(3), Cone::Zero(1)],
    )
    .expect("valid program")
}

/// Checks `A^T y = 0`, `b^T y = -1` and `y` in the dual cone.
pub fn is_infeasibility_certificate(prog: &ConeProgram, y: &DVector<f64>, tol: f64) -> bool {
    if (prog.a.transpose() * y).norm() > tol || (prog.b.dot(y) + 1.0).abs() > tol {
        return false;
    }
    let mut row = 0;
    for cone in &prog.cones {
        let yb = y.rows(row, cone.dim());
        let ok = match cone {
            Cone::Zero(_) => true,
            Cone::NonNeg(_) => yb.min() >= -tol,
            Cone::SecondOrder(n) => yb[0] >= yb.rows(1, n - 1).norm() - tol,
        };
        if !ok {
            return false;
        }
        row += cone.dim();
    }
    true
}

fn check_solver() -> Result<(bool, String)> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut misses = 0;
    for _ in 0..20 {
        let (prog, opt) = planted_program(&mut rng);
        let r = solve(&prog, &SolverOptions::default())?;
        let rel = (r.objective - opt).abs() / opt.abs().max(1.0);
        if r.status != SolveStatus::Optimal || rel > 1e-7 {
            misses += 1;
        }
        worst = worst.max(rel);
    }
    let mut certified = 0;
    for prog in [infeasible_orthant(), infeasible_cone_head()] {
        let r = solve(&prog, &SolverOptions::default())?;
        if r.status == SolveStatus::Infeasible && is_infeasibility_certificate(&prog, &r.y, 1e-8) {
            certified += 1;
        }
    }
    Ok((
        misses == 0 && certified == 2,
        format!("20 planted programs, {misses} missed, worst rel error {worst:.2e}; {certified}/2 infeasible certified"),
    ))
}

fn check_channel_statistics(seed: u64) -> Result<(bool, String)> {
    let scenario = reference_scenario();
    let topo = &scenario.topology;
    let per_draw = topo.base_stations() * topo.users() * topo.antennas();
    let draws = 100_000usize.div_ceil(per_draw);
    let mut sum = 0.0;
    for s in 0..draws as u64 {
        sum += sample_initial(topo, seed.wrapping_add(s)).as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    let m2 = sum / (draws * per_draw) as f64;

    let cfg = TrackConfig::default();
    let expect = increment_second_moment(cfg.zeta);
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in 0..10_000u64 {
        let prev = sample_initial(topo, seed.wrapping_add(s));
        let next = step(&prev, &scenario, &cfg, &mut track_rng(seed.wrapping_add(s), 0, 1))?;
        sum += next.distance_sq(&prev);
        count += per_draw;
    }
    let inc = sum / count as f64;
    let (e1, e2) = ((m2 - 1.0).abs(), (inc - expect).abs() / expect);
    Ok((
        e1 <= 0.01 && e2 <= 0.02,
        format!(
            "second moment {m2:.4} (err {:.2}%), increment {inc:.5} vs {expect:.5} (err {:.2}%)",
            100.0 * e1,
            100.0 * e2
        ),
    ))
}

fn check_oracle_equivalence(instances: &[(u64, ChannelSet)], scenario: &Scenario, exec: Execution) -> Result<(bool, String)> {
    let t0 = Instant::now();
    let rel = map_indexed(instances.len(), exec, |i| -> Result<f64> {
        let h = &instances[i].1;
        let Outcome::Feasible(dual) = solve_uplink_fixed_point(h, scenario, &DualOptions::default())? else {
            return Ok(f64::INFINITY);
        };
        let (_, w) = solve_centralized(h, scenario, &SolverOptions::default())?;
        let Some(w) = w else {
            return Ok(f64::INFINITY);
        };
        let p = dual.total_power();
        Ok((w.total_power() - p).abs() / p)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let elapsed = t0.elapsed();
    let worst = rel.iter().copied().fold(0.0, f64::max);
    let bad = rel.iter().filter(|r| !(**r <= 1e-5)).count();
    Ok((
        bad == 0 && elapsed <= Duration::from_secs(60),
        format!("{} instances, {bad} above 1e-5, worst {worst:.2e}, {:.1} s", rel.len(), elapsed.as_secs_f64()),
    ))
}

struct StaticRun {
    reached_at: Option<usize>,
    decrease_failures: usize,
    /// Failures with the residual taken against the updated `tau`.
    updated_failures: usize,
    iterations: usize,
    max_balance: f64,
}

fn static_run(h: &ChannelSet, scenario: &Scenario, index: &ConsensusIndex, cfg: &AdmmConfig) -> Result<StaticRun> {
    let Outcome::Feasible(dual) = solve_uplink_fixed_point(h, scenario, &DualOptions::default())? else {
        return Err(Error::InvalidParameter("instance is infeasible".into()));
    };
    let star: InterferenceState = consensus_reference(&dual, h, scenario, index);
    let history = match solve_static(h, scenario, index, cfg) {
        Ok(StaticSolution { history, .. }) => history,
        Err(Error::StaticTimeout(sol)) => sol.history,
        Err(e) => return Err(e),
    };
    let mut v_prev = lyapunov_of(&AdmmState::initial(scenario, index).vars, &star, cfg.rho, index);
    let mut run = StaticRun {
        reached_at: None,
        decrease_failures: 0,
        updated_failures: 0,
        iterations: history.len(),
        max_balance: 0.0,
    };
    for rec in &history {
        let v = lyapunov_of(&rec.vars, &star, cfg.rho, index);
        if !check_decrease(v_prev, v, rec, cfg.rho) {
            run.decrease_failures += 1;
        }
        if !check_decrease_updated(v_prev, v, rec, cfg.rho) {
            run.updated_failures += 1;
        }
        v_prev = v;
        if run.reached_at.is_none() && rec.w.distance_sq(&dual.w_star).sqrt() <= 1e-3 {
            run.reached_at = Some(rec.iteration);
        }
        run.max_balance = run.max_balance.max(rec.dual_balance / norm_inf(&rec.vars.nu).max(1.0));
    }
    Ok(run)
}

/// Executes every check, calling `report` as each one completes.
pub fn run_acceptance(cfg: &AcceptanceConfig, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut push = |o: CheckOutcome| {
        report(&o);
        out.push(o);
    };
    let scenario = reference_scenario();
    let index = ConsensusIndex::build(&scenario.topology);
    let admm = AdmmConfig {
        averaging_skew: cfg.fault.skew(),
        execution: Execution::Sequential,
        ..AdmmConfig::with_rho(50.0)
    };

    push(outcome("7", "conic solver suite", check_solver()));
    push(outcome("8", "channel statistics", check_channel_statistics(cfg.seed)));

    let instances = feasible_instances(&scenario, cfg.seed, 100);
    push(outcome(
        "1",
        "SOCP and duality oracle agree",
        check_oracle_equivalence(&instances, &scenario, cfg.execution),
    ));

    let runs = map_indexed(20, cfg.execution, |i| static_run(&instances[i].1, &scenario, &index, &admm))
        .into_iter()
        .collect::<Result<Vec<_>>>();
    let static_balance = runs.as_ref().map_or(f64::INFINITY, |r| r.iter().map(|r| r.max_balance).fold(0.0, f64::max));
    let (conv, decr) = match &runs {
        Ok(runs) => {
            let slow = runs.iter().filter(|r| r.reached_at.is_none_or(|i| i > 500)).count();
            let worst = runs.iter().filter_map(|r| r.reached_at).max().unwrap_or(0);
            let fails: usize = runs.iter().map(|r| r.decrease_failures).sum();
            let upd: usize = runs.iter().map(|r| r.updated_failures).sum();
            let iters: usize = runs.iter().map(|r| r.iterations).sum();
            let bad_runs = runs.iter().filter(|r| r.decrease_failures > 0).count();
            (
                Ok((
                    slow == 0,
                    format!("{} runs, {slow} not within 1e-3 of the optimum by iteration 500 (slowest {worst})", runs.len()),
                )),
                Ok((
                    fails == 0,
                    format!(
                        "{fails} of {iters} iterations violate the decrease with r = t - E tau_prev ({bad_runs} runs); \
                         {upd} violate it with r = t - E tau"
                    ),
                )),
            )
        }
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    };
    push(outcome("2a", "static ADMM convergence", conv));
    push(outcome("2b", "Lyapunov decrease", decr));

    let exp = ExperimentConfig {
        scenario: scenario.clone(),
        track: TrackConfig {
            seed: cfg.seed,
            ..TrackConfig::default()
        },
        rhos: vec![50.0, 1.0, 1000.0],
        tracks: cfg.tracks,
        admm: AdmmConfig {
            execution: Execution::Sequential,
            ..admm
        },
        execution: cfg.execution,
        out_dir: None,
    };
    let t0 = Instant::now();
    let sweeps = run_ensemble(&exp);
    let elapsed = t0.elapsed();
    let window = 30..50;
    let stats: std::result::Result<Vec<(f64, WindowStats, usize)>, String> = match &sweeps {
        Ok(s) => Ok(s
            .iter()
            .map(|s| (s.rho, s.window_stats(window.clone()), s.tracks.iter().map(|t| t.steps.len()).sum()))
            .collect()),
        Err(e) => Err(format!("ensemble failed: {e}")),
    };
    let by_rho = |rho: f64| -> std::result::Result<WindowStats, String> {
        let s = stats.as_ref().map_err(Clone::clone)?;
        Ok(s.iter().find(|x| x.0 == rho).expect("rho is part of the sweep").1.clone())
    };

    push(outcome(
        "3",
        "consensus duals balanced",
        stats.as_ref().map_err(Clone::clone).map(|s| {
            let t = s.iter().map(|x| x.1.max_dual_balance).fold(0.0, f64::max);
            let worst = t.max(static_balance);
            (
                worst <= 1e-9,
                format!("max |E^T nu|_inf / max(1, |nu|_inf) = {worst:.2e} (static {static_balance:.2e}, tracking {t:.2e})"),
            )
        }),
    ));
    push(outcome(
        "4",
        "distance bound",
        stats.as_ref().map_err(Clone::clone).map(|s| {
            let v: usize = s.iter().map(|x| x.1.distance_bound_violations).sum();
            let steps: usize = s.iter().map(|x| x.2).sum();
            (v == 0, format!("{v} violations in {steps} tracking steps"))
        }),
    ));

    let note = format!("rho 50, {} tracks, steps 31-50", cfg.tracks);
    push(outcome(
        "5a",
        "tracking power gap",
        by_rho(50.0).map(|w| {
            let gap = w.relative_power_gap();
            (
                gap <= 0.10,
                format!(
                    "{note}: ADMM {:.2} vs optimal {:.2}, gap {:.2}%",
                    w.mean_power_admm,
                    w.mean_power_opt,
                    100.0 * gap
                ),
            )
        }),
    ));
    push(outcome(
        "5b",
        "tracking mean SINR",
        by_rho(50.0).map(|w| {
            (
                w.mean_sinr >= 9.5,
                format!("{note}: mean SINR {:.3} (target 10, floor 9.5)", w.mean_sinr),
            )
        }),
    ));
    push(outcome(
        "5c",
        "per-step SINR bound",
        by_rho(50.0).map(|w| {
            (
                w.sinr_bound_violations == 0,
                format!(
                    "{note}: {} user-steps below the bound ({} over all steps)",
                    w.sinr_bound_violations, w.sinr_bound_violations_total
                ),
            )
        }),
    ));
    push(outcome(
        "5d",
        "tracking runtime",
        stats.as_ref().map_err(Clone::clone).map(|_| {
            (
                elapsed <= Duration::from_secs(600),
                format!("{:.1} s for the rho 1, 50, 1000 sweeps (budget 600 s)", elapsed.as_secs_f64()),
            )
        }),
    ));
    push(outcome(
        "6",
        "penalty direction",
        by_rho(1.0).and_then(|lo| by_rho(1000.0).map(|hi| (lo, hi))).map(|(lo, hi)| {
            (
                hi.mean_power_admm >= hi.mean_power_opt && lo.mean_power_admm <= lo.mean_power_opt,
                format!(
                    "rho 1000: {:.2} vs optimal {:.2}; rho 1: {:.2} vs optimal {:.2}",
                    hi.mean_power_admm, hi.mean_power_opt, lo.mean_power_admm, lo.mean_power_opt
                ),
            )
        }),
    ));
    out
}
