//! Consensus ADMM over the intercell interference copies.
//!
//! Each iteration solves the base stations' local problems, averages the two
//! copies of every interference term into `tau`, and takes a dual step on
//! `nu`. Local solves are independent and may run concurrently; everything
//! after them is reduced sequentially in base-station order.

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::{
    compute_all_sinr, norm, BeamformerSet, ChannelSet, ConsensusIndex, InterferenceState, Scenario,
};
use crate::socp::{build_local, solve, SolveStatus, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Penalty parameter, also the dual step size.
    pub rho: f64,
    /// Tolerance of the local cone program solves. A solve that stalls
    /// before reaching it is still accepted if its residuals are below
    /// [`STALLED_SOLVE_TOL`].
    pub inner_tol: f64,
    /// Iteration cap for [`solve_static`].
    pub max_static_iters: usize,
    /// [`solve_static`] stops once the primal residual and `rho` times the
    /// dual change are both below this.
    pub convergence_eps: f64,
    pub execution: Execution,
    /// Fault injection for verification runs: weight shifted from the
    /// sufferer copy to the owner copy when averaging. Zero in normal use.
    #[doc(hidden)]
    pub averaging_skew: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 50.0,
            inner_tol: 1e-10,
            max_static_iters: 500,
            convergence_eps: 1e-5,
            execution: Execution::default(),
            averaging_skew: 0.0,
        }
    }
}

impl AdmmConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.inner_tol > 0.0) || !(self.convergence_eps > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Residual level at which a local solve that hit its iteration cap is
/// used anyway.
pub const STALLED_SOLVE_TOL: f64 = 1e-7;

/// Iterate carried between ADMM steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: BeamformerSet,
    pub vars: InterferenceState,
    pub iteration: usize,
}

impl AdmmState {
    /// `tau = 0`, `nu = 0`, zero beams.
    pub fn initial(scenario: &Scenario, index: &ConsensusIndex) -> Self {
        let topo = &scenario.topology;
        Self {
            w: BeamformerSet::zeros(topo.users(), topo.antennas()),
            vars: InterferenceState::zeros(index),
            iteration: 0,
        }
    }

    /// Starts from given consistency variables and duals.
    pub fn from_reference(scenario: &Scenario, index: &ConsensusIndex, tau: Vec<f64>, nu: Vec<f64>) -> Self {
        let mut s = Self::initial(scenario, index);
        s.vars.t = index.expand(&tau);
        s.vars.tau = tau;
        s.vars.nu = nu;
        s
    }
}

/// Metrics of one ADMM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    pub w: BeamformerSet,
    pub vars: InterferenceState,
    /// `||t^i - E tau^{i-1}||`.
    pub primal_residual: f64,
    /// `||t^i - E tau^i||`.
    pub consensus_residual: f64,
    /// `||E (tau^i - tau^{i-1})||`.
    pub dual_change: f64,
    /// `||E^T nu^i||_inf`.
    pub dual_balance: f64,
    pub sinr: Vec<f64>,
    pub total_power: f64,
    /// Local solves accepted at the relaxed tolerance.
    pub stalled_solves: usize,
}

/// One ADMM iteration from `state` under channel `h`.
pub fn admm_step(
    state: &AdmmState,
    h: &ChannelSet,
    scenario: &Scenario,
    index: &ConsensusIndex,
    cfg: &AdmmConfig,
) -> Result<(AdmmState, IterationRecord)> {
    cfg.validate()?;
    let topo = &scenario.topology;
    let nb = topo.base_stations();
    let opts = SolverOptions::with_tol(cfg.inner_tol);
    let prev = &state.vars;

    let locals = map_indexed(nb, cfg.execution, |b| -> Result<_> {
        let nu_b = &prev.nu[index.block_range(b)];
        let (prog, map) = build_local(b, h, scenario, index, &prev.tau, nu_b, cfg.rho)?;
        let report = solve(&prog, &opts)?;
        let usable = report.status == SolveStatus::Optimal
            || (report.status == SolveStatus::MaxIterations && report.residuals.max() <= STALLED_SOLVE_TOL);
        if !usable {
            return Err(Error::LocalSubproblem {
                bs: b,
                status: report.status,
            });
        }
        Ok((map, report.x, report.status != SolveStatus::Optimal))
    });

    // exchange: assemble t and the beams in base-station order
    let mut w = BeamformerSet::zeros(topo.users(), topo.antennas());
    let mut t = vec![0.0; index.num_copies()];
    let mut stalled_solves = 0;
    for (b, local) in locals.into_iter().enumerate() {
        let (map, x, stalled) = local?;
        stalled_solves += usize::from(stalled);
        map.write_beams(&x, &mut w);
        t[index.block_range(b)].copy_from_slice(&map.copies(&x));
    }

    let tau = average(index, &t, cfg.averaging_skew);
    let e_tau = index.expand(&tau);
    let e_tau_prev = index.expand(&prev.tau);
    let mut nu = prev.nu.clone();
    for (i, v) in nu.iter_mut().enumerate() {
        *v += cfg.rho * (t[i] - e_tau[i]);
    }

    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let primal_residual = norm(&diff(&t, &e_tau_prev));
    let consensus_residual = norm(&diff(&t, &e_tau));
    let dual_change = norm(&diff(&e_tau, &e_tau_prev));
    let dual_balance = crate::model::norm_inf(&index.transpose_apply(&nu));
    let sinr = compute_all_sinr(&w, h, scenario)?;
    let total_power = w.total_power();
    let vars = InterferenceState { t, tau, nu };
    let next = AdmmState {
        w: w.clone(),
        vars: vars.clone(),
        iteration: state.iteration + 1,
    };
    let record = IterationRecord {
        iteration: next.iteration,
        w,
        vars,
        primal_residual,
        consensus_residual,
        dual_change,
        dual_balance,
        sinr,
        total_power,
        stalled_solves,
    };
    Ok((next, record))
}

fn average(index: &ConsensusIndex, t: &[f64], skew: f64) -> Vec<f64> {
    if skew == 0.0 {
        return index.average(t);
    }
    (0..index.num_pairs())
        .map(|p| (0.5 + skew) * t[index.owner_slot(p)] + (0.5 - skew) * t[index.sufferer_slot(p)])
        .collect()
}

/// `(1/rho) ||nu - nu*||^2 + rho ||E (tau - tau*)||^2`.
pub fn lyapunov(
    nu: &[f64],
    tau: &[f64],
    nu_star: &[f64],
    tau_star: &[f64],
    rho: f64,
    index: &ConsensusIndex,
) -> f64 {
    let dn: f64 = nu.iter().zip(nu_star).map(|(a, b)| (a - b).powi(2)).sum();
    let dt: Vec<f64> = tau.iter().zip(tau_star).map(|(a, b)| a - b).collect();
    let et: f64 = index.expand(&dt).iter().map(|v| v * v).sum();
    dn / rho + rho * et
}

/// Lyapunov value of `vars` against the reference optimum `star`.
pub fn lyapunov_of(vars: &InterferenceState, star: &InterferenceState, rho: f64, index: &ConsensusIndex) -> f64 {
    lyapunov(&vars.nu, &vars.tau, &star.nu, &star.tau, rho, index)
}

/// Additive slack allowed in [`check_decrease`].
pub fn decrease_slack(v_prev: f64) -> f64 {
    1e-6 * v_prev.max(1.0)
}

/// `V^i <= V^{i-1} - rho ||r^i||^2 - rho ||E (tau^i - tau^{i-1})||^2 + slack`
/// with `r^i = t^i - E tau^{i-1}`.
pub fn check_decrease(v_prev: f64, v: f64, record: &IterationRecord, rho: f64) -> bool {
    v <= v_prev - rho * record.primal_residual.powi(2) - rho * record.dual_change.powi(2)
        + decrease_slack(v_prev)
}

/// Same inequality with the residual measured against the updated
/// consistency variables, `r^i = t^i - E tau^i`.
pub fn check_decrease_updated(v_prev: f64, v: f64, record: &IterationRecord, rho: f64) -> bool {
    v <= v_prev - rho * record.consensus_residual.powi(2) - rho * record.dual_change.powi(2)
        + decrease_slack(v_prev)
}

/// Converged (or best available) static-channel iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSolution {
    pub w: BeamformerSet,
    pub vars: InterferenceState,
    pub history: Vec<IterationRecord>,
}

/// Iterates [`admm_step`] on a fixed channel from `start` until the
/// residuals fall below `cfg.convergence_eps`.
pub fn solve_static_from(
    start: AdmmState,
    h: &ChannelSet,
    scenario: &Scenario,
    index: &ConsensusIndex,
    cfg: &AdmmConfig,
) -> Result<StaticSolution> {
    let mut state = start;
    let mut history = Vec::new();
    for _ in 0..cfg.max_static_iters {
        let (next, record) = admm_step(&state, h, scenario, index, cfg)?;
        let done = record.primal_residual.max(cfg.rho * record.dual_change) <= cfg.convergence_eps;
        history.push(record);
        state = next;
        if done {
            return Ok(StaticSolution {
                w: state.w,
                vars: state.vars,
                history,
            });
        }
    }
    Err(Error::StaticTimeout(Box::new(StaticSolution {
        w: state.w,
        vars: state.vars,
        history,
    })))
}

/// [`solve_static_from`] starting at `tau = 0`, `nu = 0`.
pub fn solve_static(
    h: &ChannelSet,
    scenario: &Scenario,
    index: &ConsensusIndex,
    cfg: &AdmmConfig,
) -> Result<StaticSolution> {
    solve_static_from(AdmmState::initial(scenario, index), h, scenario, index, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;

    #[test]
    fn lyapunov_algebra() {
        let topo = Topology::uniform(2, 1, 1).unwrap();
        let index = ConsensusIndex::build(&topo);
        let nu_star = vec![1.0, -1.0, 2.0, -2.0];
        let tau_star = vec![0.5, 0.25];
        assert_eq!(lyapunov(&nu_star, &tau_star, &nu_star, &tau_star, 3.0, &index), 0.0);
        // nu = nu* + rho u
        let u = [1.0, 0.0, -2.0, 0.5];
        let nu: Vec<f64> = nu_star.iter().zip(&u).map(|(a, b)| a + 3.0 * b).collect();
        let v = lyapunov(&nu, &tau_star, &nu_star, &tau_star, 3.0, &index);
        assert!((v - 3.0 * 5.25).abs() < 1e-12);
        // E duplicates columns
        let tau = vec![1.5, 0.25];
        let v = lyapunov(&nu_star, &tau, &nu_star, &tau_star, 3.0, &index);
        assert!((v - 2.0 * 3.0 * 1.0).abs() < 1e-12);
    }

    fn record(primal: f64, change: f64) -> IterationRecord {
        IterationRecord {
            iteration: 1,
            w: BeamformerSet::zeros(1, 1),
            vars: InterferenceState {
                t: vec![],
                tau: vec![],
                nu: vec![],
            },
            primal_residual: primal,
            consensus_residual: primal,
            dual_change: change,
            dual_balance: 0.0,
            sinr: vec![],
            total_power: 0.0,
            stalled_solves: 0,
        }
    }

    #[test]
    fn decrease_check() {
        assert!(check_decrease(0.0, 0.0, &record(0.0, 0.0), 50.0));
        assert!(!check_decrease(1.0, 1.5, &record(0.0, 0.0), 50.0));
        assert!(check_decrease(10.0, 4.0, &record(0.2, 0.1), 50.0));
        assert!(!check_decrease(10.0, 8.0, &record(0.2, 0.1), 50.0));
    }

    #[test]
    fn nonpositive_rho_is_rejected() {
        assert!(AdmmConfig::with_rho(0.0).validate().is_err());
        assert!(AdmmConfig::with_rho(f64::NAN).validate().is_err());
        assert!(AdmmConfig::with_rho(1.0).validate().is_ok());
    }
}
