//! Closed-form route to the centralized optimum through uplink-downlink
//! duality.
//!
//! The virtual uplink has unit noise and user powers `lambda`. The optimal
//! `lambda` is the fixed point of
//!
//! ```text
//! lambda_k = gamma_k / (h_kk^H (I + sum_{j != k} lambda_j h_bj h_bj^H)^-1 h_kk),   b = b(k)
//! ```
//!
//! with `h_kk = h_{b(k)k}`. At the optimum `lambda_k` is the multiplier of the
//! k-th SINR constraint written as
//! `|h_kk^H w_k|^2 / gamma_k >= sum_{j != k} |h_{b(j)k}^H w_j|^2 + sigma_k^2`,
//! so the optimal power equals `sum_k lambda_k sigma_k^2`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{
    inner, BeamformerSet, ChannelSet, ConsensusIndex, InterferenceState, Scenario,
};

/// Result of a computation that can find the scenario infeasible.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Feasible(T),
    Infeasible,
}

impl<T> Outcome<T> {
    pub fn feasible(self) -> Option<T> {
        match self {
            Outcome::Feasible(v) => Some(v),
            Outcome::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Outcome::Feasible(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    /// Stop when the largest relative change of `lambda` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Divergence cap on `lambda_k / (gamma_k / ||h_kk||^2)`.
    pub cap: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            cap: 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub lambda: Vec<f64>,
    /// Unit-norm directions with `h_kk^H w_k^d` real and positive.
    pub directions: BeamformerSet,
    pub powers: Vec<f64>,
    /// `w_k = sqrt(p_k) w_k^d`.
    pub w_star: BeamformerSet,
    pub iterations: usize,
}

impl DualSolution {
    /// `sum_k lambda_k sigma_k^2`.
    pub fn dual_objective(&self, scenario: &Scenario) -> f64 {
        self.lambda
            .iter()
            .zip(&scenario.qos.sigma2)
            .map(|(l, s)| l * s)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// `I + sum_{j != k} lambda_j h_{m j} h_{m j}^H` at base station `m`.
fn uplink_covariance(h: &ChannelSet, m: usize, lambda: &[f64], skip: usize) -> DMatrix<Complex64> {
    let n = h.antennas();
    let mut r = DMatrix::<Complex64>::identity(n, n);
    for (j, &l) in lambda.iter().enumerate() {
        if j == skip || l == 0.0 {
            continue;
        }
        let v = DVector::from_column_slice(h.get(m, j));
        r += (&v * v.adjoint()) * Complex64::from(l);
    }
    r
}

fn solve_hpd(r: DMatrix<Complex64>, rhs: &[Complex64]) -> DVector<Complex64> {
    let chol = Cholesky::new(r).expect("identity plus a PSD matrix is positive definite");
    chol.solve(&DVector::from_column_slice(rhs))
}

fn check_direct_channels(h: &ChannelSet, scenario: &Scenario) -> Result<()> {
    let topo = &scenario.topology;
    h.check(topo)?;
    for k in 0..topo.users() {
        if h.get(topo.serving(k), k).iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(Error::ZeroChannel { user: k });
        }
    }
    Ok(())
}

/// One Jacobi sweep of the uplink fixed-point map.
pub fn uplink_update(h: &ChannelSet, scenario: &Scenario, lambda: &[f64]) -> Result<Vec<f64>> {
    let topo = &scenario.topology;
    check_direct_channels(h, scenario)?;
    if lambda.len() != topo.users() {
        return Err(Error::Dimension(format!(
            "lambda has {} entries for {} users",
            lambda.len(),
            topo.users()
        )));
    }
    Ok((0..topo.users())
        .map(|k| {
            let b = topo.serving(k);
            let hk = h.get(b, k);
            let x = solve_hpd(uplink_covariance(h, b, lambda, k), hk);
            let q = inner(hk, x.as_slice()).re;
            scenario.qos.gamma[k] / q
        })
        .collect())
}

/// Normalized MMSE-type receive directions for uplink powers `lambda`,
/// phase-rotated so that `h_kk^H w_k^d > 0`.
pub fn uplink_directions(h: &ChannelSet, scenario: &Scenario, lambda: &[f64]) -> Result<BeamformerSet> {
    let topo = &scenario.topology;
    check_direct_channels(h, scenario)?;
    let mut dirs = BeamformerSet::zeros(topo.users(), topo.antennas());
    for k in 0..topo.users() {
        let b = topo.serving(k);
        let hk = h.get(b, k);
        let x = solve_hpd(uplink_covariance(h, b, lambda, k), hk);
        let g = inner(hk, x.as_slice());
        if g.norm() == 0.0 {
            return Err(Error::OrthogonalDirection { user: k });
        }
        // w / ||w|| * conj-phase of h^H w
        let rot = g.conj() / g.norm() / x.norm();
        for (d, v) in dirs.get_mut(k).iter_mut().zip(x.iter()) {
            *d = v * rot;
        }
    }
    Ok(dirs)
}

/// Fixed-point iteration for the optimal uplink powers, followed by the
/// downlink power allocation along the resulting directions.
pub fn solve_uplink_fixed_point(
    h: &ChannelSet,
    scenario: &Scenario,
    opts: &DualOptions,
) -> Result<Outcome<DualSolution>> {
    let topo = &scenario.topology;
    check_direct_channels(h, scenario)?;
    let nk = topo.users();
    let scale: Vec<f64> = (0..nk)
        .map(|k| {
            let hk = h.get(topo.serving(k), k);
            scenario.qos.gamma[k] / hk.iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .collect();
    let mut lambda = vec![0.0; nk];
    for iter in 1..=opts.max_iter {
        let next = uplink_update(h, scenario, &lambda)?;
        if next.iter().zip(&scale).any(|(l, s)| !(l.is_finite() && *l <= opts.cap * s)) {
            return Ok(Outcome::Infeasible);
        }
        let change = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        lambda = next;
        if change <= opts.tol {
            let directions = uplink_directions(h, scenario, &lambda)?;
            let Outcome::Feasible(powers) = solve_power_allocation(&directions, h, scenario)? else {
                return Ok(Outcome::Infeasible);
            };
            let mut w_star = directions.clone();
            for (k, p) in powers.iter().enumerate() {
                let a = p.sqrt();
                w_star.get_mut(k).iter_mut().for_each(|z| *z *= a);
            }
            return Ok(Outcome::Feasible(DualSolution {
                lambda,
                directions,
                powers,
                w_star,
                iterations: iter,
            }));
        }
    }
    Ok(Outcome::Infeasible)
}

/// Gains of fixed unit beam directions: `Psi_kj = |h_{b(j)k}^H w_j|^2`
/// off the diagonal, `D_kk = gamma_k / |h_kk^H w_k|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub psi: DMatrix<f64>,
    pub d: DVector<f64>,
    pub sigma2: DVector<f64>,
}

impl CouplingMatrices {
    pub fn new(psi: DMatrix<f64>, d: DVector<f64>, sigma2: DVector<f64>) -> Result<Self> {
        let k = d.len();
        if psi.nrows() != k || psi.ncols() != k || sigma2.len() != k {
            return Err(Error::Dimension(format!(
                "Psi is {}x{}, D has {k} entries, sigma has {}",
                psi.nrows(),
                psi.ncols(),
                sigma2.len()
            )));
        }
        Ok(Self { psi, d, sigma2 })
    }

    /// `D Psi`.
    pub fn gain_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.d) * &self.psi
    }
}

pub fn coupling_matrices(
    directions: &BeamformerSet,
    h: &ChannelSet,
    scenario: &Scenario,
) -> Result<CouplingMatrices> {
    let topo = &scenario.topology;
    h.check(topo)?;
    let nk = topo.users();
    if directions.users() != nk || directions.antennas() != topo.antennas() {
        return Err(Error::Dimension("directions do not match the topology".into()));
    }
    let mut psi = DMatrix::zeros(nk, nk);
    let mut d = DVector::zeros(nk);
    for k in 0..nk {
        for j in 0..nk {
            let g = inner(h.get(topo.serving(j), k), directions.get(j)).norm_sqr();
            if j == k {
                if g == 0.0 {
                    return Err(Error::OrthogonalDirection { user: k });
                }
                d[k] = scenario.qos.gamma[k] / g;
            } else {
                psi[(k, j)] = g;
            }
        }
    }
    CouplingMatrices::new(psi, d, DVector::from_column_slice(&scenario.qos.sigma2))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `p = (I - D Psi)^-1 D sigma` when `rho(D Psi) < 1`.
pub fn allocate_power(c: &CouplingMatrices) -> Outcome<Vec<f64>> {
    let dpsi = c.gain_matrix();
    if spectral_radius(&dpsi) >= 1.0 {
        return Outcome::Infeasible;
    }
    let k = c.d.len();
    let lhs = DMatrix::identity(k, k) - dpsi;
    let rhs = c.d.component_mul(&c.sigma2);
    match lhs.lu().solve(&rhs) {
        Some(p) if p.iter().all(|v| v.is_finite() && *v > 0.0) => Outcome::Feasible(p.as_slice().to_vec()),
        _ => Outcome::Infeasible,
    }
}

/// Downlink powers meeting every SINR target with equality along fixed
/// unit directions.
pub fn solve_power_allocation(
    directions: &BeamformerSet,
    h: &ChannelSet,
    scenario: &Scenario,
) -> Result<Outcome<Vec<f64>>> {
    Ok(allocate_power(&coupling_matrices(directions, h, scenario)?))
}

/// Optimal consensus duals from the SINR multipliers and the optimal
/// intercell interference levels `tau*`.
///
/// Stationarity of the Lagrangian in the two copies of pair `(m, k)` gives
/// `nu = +2 lambda_k tau_mk` on the owner copy (held by `m`) and
/// `nu = -2 lambda_k tau_mk` on the sufferer copy (held by `b(k)`).
pub fn extract_consensus_duals(lambda: &[f64], tau_star: &[f64], index: &ConsensusIndex) -> Vec<f64> {
    let mut nu = vec![0.0; index.num_copies()];
    for (p, &(_, k)) in index.pairs().iter().enumerate() {
        let v = 2.0 * lambda[k] * tau_star[p];
        nu[index.owner_slot(p)] = v;
        nu[index.sufferer_slot(p)] = -v;
    }
    nu
}

/// Optimal `(t, tau, nu)` for the consensus problem.
pub fn consensus_reference(
    dual: &DualSolution,
    h: &ChannelSet,
    scenario: &Scenario,
    index: &ConsensusIndex,
) -> InterferenceState {
    let tau = crate::model::exact_consistency(&dual.w_star, h, &scenario.topology, index);
    let nu = extract_consensus_duals(&dual.lambda, &tau, index);
    InterferenceState {
        t: index.expand(&tau),
        tau,
        nu,
    }
}

/// Whether every SINR target can be met.
pub fn is_feasible(h: &ChannelSet, scenario: &Scenario) -> bool {
    matches!(
        solve_uplink_fixed_point(h, scenario, &DualOptions::default()),
        Ok(Outcome::Feasible(_))
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_user_power_allocation() {
        let c = CouplingMatrices::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert!((spectral_radius(&c.gain_matrix()) - 0.5).abs() < 1e-12);
        let p = allocate_power(&c).feasible().unwrap();
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_power_allocation() {
        let c = CouplingMatrices::new(
            DMatrix::zeros(3, 3),
            DVector::from_vec(vec![2.0, 0.5, 4.0]),
            DVector::from_vec(vec![1.0, 3.0, 0.25]),
        )
        .unwrap();
        assert_eq!(allocate_power(&c).feasible().unwrap(), vec![2.0, 1.5, 1.0]);
    }

    #[test]
    fn spectral_radius_above_one_is_infeasible() {
        let c = CouplingMatrices::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.5, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert!((spectral_radius(&c.gain_matrix()) - 1.5).abs() < 1e-12);
        assert_eq!(allocate_power(&c), Outcome::Infeasible);
    }

    #[test]
    fn spectral_radius_of_rotation_uses_complex_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&m) - 2.0).abs() < 1e-12);
    }
}
