use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{solve, Cone, ConeProgram, SolveReport, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{BeamformerSet, ChannelSet, ConsensusIndex, CopyRole, Scenario};

/// Row-by-row assembly of `A x + s = b`.
struct Rows {
    nvars: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl Rows {
    fn new(nvars: usize) -> Self {
        Self {
            nvars,
            a: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// Appends the row `s = rhs - sum coef * x[var]`, i.e. `A` gets `coef`.
    fn push(&mut self, entries: &[(usize, f64)], rhs: f64) {
        let start = self.a.len();
        self.a.resize(start + self.nvars, 0.0);
        for &(j, v) in entries {
            self.a[start + j] += v;
        }
        self.b.push(rhs);
    }

    /// Slack equal to `sum coef * x[var] + offset`.
    fn slack(&mut self, entries: &[(usize, f64)], offset: f64) {
        let neg: Vec<(usize, f64)> = entries.iter().map(|&(j, v)| (j, -v)).collect();
        self.push(&neg, offset);
    }

    fn close(&mut self, start_rows: usize, kind: fn(usize) -> Cone) {
        let n = self.b.len() - start_rows;
        let cone = match kind(n) {
            Cone::SecondOrder(1) => Cone::NonNeg(1),
            c => c,
        };
        match (self.cones.last_mut(), cone) {
            (Some(Cone::Zero(m)), Cone::Zero(n)) => *m += n,
            (Some(Cone::NonNeg(m)), Cone::NonNeg(n)) => *m += n,
            _ => self.cones.push(cone),
        }
    }

    fn len(&self) -> usize {
        self.b.len()
    }

    fn finish(self, c: DVector<f64>) -> Result<ConeProgram> {
        let rows = self.b.len();
        let a = DMatrix::from_row_slice(rows, self.nvars, &self.a);
        ConeProgram::new(c, a, DVector::from_vec(self.b), self.cones)
    }
}

/// Coefficients of `Re(h^H w)` and `Im(h^H w)` on the realified block of `w`
/// starting at variable `off`.
fn re_im(h: &[Complex64], off: usize) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let n = h.len();
    let mut re = Vec::with_capacity(2 * n);
    let mut im = Vec::with_capacity(2 * n);
    for (a, z) in h.iter().enumerate() {
        re.push((off + a, z.re));
        re.push((off + n + a, z.im));
        im.push((off + a, -z.im));
        im.push((off + n + a, z.re));
    }
    (re, im)
}

fn scaled(e: &[(usize, f64)], k: f64) -> Vec<(usize, f64)> {
    e.iter().map(|&(j, v)| (j, v * k)).collect()
}

fn direct_channel_nonzero(h: &ChannelSet, scenario: &Scenario, k: usize) -> Result<()> {
    let hk = h.get(scenario.topology.serving(k), k);
    if hk.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::ZeroChannel { user: k });
    }
    Ok(())
}

/// `p >= ||x||^2` as `||[2x; p - 1]|| <= p + 1`, where each entry of `x` is
/// an affine expression `(coefs, offset)`.
fn epigraph(rows: &mut Rows, p: usize, x: &[(Vec<(usize, f64)>, f64)]) {
    let start = rows.len();
    rows.slack(&[(p, 1.0)], 1.0);
    for (coefs, off) in x {
        rows.slack(&scaled(coefs, 2.0), 2.0 * off);
    }
    rows.slack(&[(p, 1.0)], -1.0);
    rows.close(start, Cone::SecondOrder);
}

/// Variable layout of the centralized program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralizedMap {
    users: usize,
    antennas: usize,
}

impl CentralizedMap {
    /// Offset of the realified `w_k`: `N` real parts followed by `N` imaginary parts.
    pub fn beam_offset(&self, k: usize) -> usize {
        2 * self.antennas * k
    }

    /// Index of the power epigraph variable.
    pub fn power_var(&self) -> usize {
        2 * self.antennas * self.users
    }

    pub fn beamformers(&self, x: &DVector<f64>) -> BeamformerSet {
        let n = self.antennas;
        let mut w = BeamformerSet::zeros(self.users, n);
        for k in 0..self.users {
            let off = self.beam_offset(k);
            for (a, v) in w.get_mut(k).iter_mut().enumerate() {
                *v = Complex64::new(x[off + a], x[off + n + a]);
            }
        }
        w
    }
}

/// Minimum total power subject to every user's SINR target.
///
/// Variables are the realified beamformers followed by an epigraph variable
/// `P >= sum ||w_k||^2`; the objective is `P`.
pub fn build_centralized(h: &ChannelSet, scenario: &Scenario) -> Result<(ConeProgram, CentralizedMap)> {
    let topo = &scenario.topology;
    h.check(topo)?;
    let (nk, n) = (topo.users(), topo.antennas());
    let map = CentralizedMap { users: nk, antennas: n };
    let p = map.power_var();
    let mut rows = Rows::new(p + 1);
    for k in 0..nk {
        direct_channel_nonzero(h, scenario, k)?;
        let g = scenario.qos.gamma[k];
        let start = rows.len();
        let (re, _) = re_im(h.get(topo.serving(k), k), map.beam_offset(k));
        rows.slack(&scaled(&re, 1.0 / g.sqrt()), 0.0);
        for i in (0..nk).filter(|&i| i != k) {
            let (re, im) = re_im(h.get(topo.serving(i), k), map.beam_offset(i));
            rows.slack(&re, 0.0);
            rows.slack(&im, 0.0);
        }
        rows.slack(&[], scenario.qos.sigma2[k].sqrt());
        rows.close(start, Cone::SecondOrder);
    }
    for k in 0..nk {
        let start = rows.len();
        let (_, im) = re_im(h.get(topo.serving(k), k), map.beam_offset(k));
        rows.slack(&im, 0.0);
        rows.close(start, Cone::Zero);
    }
    let x: Vec<_> = (0..p).map(|j| (vec![(j, 1.0)], 0.0)).collect();
    epigraph(&mut rows, p, &x);
    let mut c = DVector::zeros(p + 1);
    c[p] = 1.0;
    Ok((rows.finish(c)?, map))
}

/// Builds and solves the centralized program. Beamformers are returned only
/// when the solve is optimal.
pub fn solve_centralized(
    h: &ChannelSet,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<(SolveReport, Option<BeamformerSet>)> {
    let (prog, map) = build_centralized(h, scenario)?;
    let report = solve(&prog, opts)?;
    let w = (report.status == SolveStatus::Optimal).then(|| map.beamformers(&report.x));
    Ok((report, w))
}

/// Variable layout of a base station's local program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalMap {
    bs: usize,
    users: Vec<usize>,
    antennas: usize,
    copies: usize,
}

impl LocalMap {
    pub fn base_station(&self) -> usize {
        self.bs
    }

    /// Served users, in the order their beams appear in `x`.
    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn beam_offset(&self, slot: usize) -> usize {
        2 * self.antennas * slot
    }

    pub fn copy_offset(&self) -> usize {
        2 * self.antennas * self.users.len()
    }

    pub fn power_var(&self) -> usize {
        self.copy_offset() + self.copies
    }

    /// Local copies `t_b`.
    pub fn copies(&self, x: &DVector<f64>) -> Vec<f64> {
        let off = self.copy_offset();
        (0..self.copies).map(|i| x[off + i]).collect()
    }

    /// Writes the served users' beams into `w`.
    pub fn write_beams(&self, x: &DVector<f64>, w: &mut BeamformerSet) {
        let n = self.antennas;
        for (slot, &k) in self.users.iter().enumerate() {
            let off = self.beam_offset(slot);
            for (a, v) in w.get_mut(k).iter_mut().enumerate() {
                *v = Complex64::new(x[off + a], x[off + n + a]);
            }
        }
    }
}

/// Local subproblem of base station `b` for one ADMM iteration:
///
/// ```text
/// minimize    sum_{k in U(b)} ||w_k||^2 + (rho/2) ||t_b - y_b||^2,   y_b = E_b tau - nu_b / rho
/// subject to  local SINR constraints with intercell terms t_mk^(b)
///             t_bj^(b) >= ||(h_bj^H w_i)_{i in U(b)}||
///             t_b >= 0
/// ```
pub fn build_local(
    b: usize,
    h: &ChannelSet,
    scenario: &Scenario,
    index: &ConsensusIndex,
    tau: &[f64],
    nu_b: &[f64],
    rho: f64,
) -> Result<(ConeProgram, LocalMap)> {
    let topo = &scenario.topology;
    h.check(topo)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if b >= topo.base_stations() {
        return Err(Error::Dimension(format!(
            "base station {} of {}",
            b + 1,
            topo.base_stations()
        )));
    }
    let len = index.block_len(b);
    if tau.len() != index.num_pairs() || nu_b.len() != len {
        return Err(Error::Dimension(format!(
            "tau has {} entries (expected {}), nu_b has {} (expected {len})",
            tau.len(),
            index.num_pairs(),
            nu_b.len()
        )));
    }
    let n = topo.antennas();
    let users = topo.served(b).to_vec();
    let map = LocalMap {
        bs: b,
        users: users.clone(),
        antennas: n,
        copies: len,
    };
    let t0 = map.copy_offset();
    let p = map.power_var();
    let mut rows = Rows::new(p + 1);

    for (slot, &k) in users.iter().enumerate() {
        direct_channel_nonzero(h, scenario, k)?;
        let g = scenario.qos.gamma[k];
        let hbk = h.get(b, k);
        let start = rows.len();
        let (re, _) = re_im(hbk, map.beam_offset(slot));
        rows.slack(&scaled(&re, 1.0 / g.sqrt()), 0.0);
        for (other, _) in users.iter().enumerate().filter(|&(_, &i)| i != k) {
            let (re, im) = re_im(hbk, map.beam_offset(other));
            rows.slack(&re, 0.0);
            rows.slack(&im, 0.0);
        }
        for m in (0..topo.base_stations()).filter(|&m| m != b) {
            let local = index.local_slot(b, m, k).ok_or(Error::MissingIndex { bs: b, user: k })?;
            rows.slack(&[(t0 + local, 1.0)], 0.0);
        }
        rows.slack(&[], scenario.qos.sigma2[k].sqrt());
        rows.close(start, Cone::SecondOrder);
    }
    for (slot, &k) in users.iter().enumerate() {
        let start = rows.len();
        let (_, im) = re_im(h.get(b, k), map.beam_offset(slot));
        rows.slack(&im, 0.0);
        rows.close(start, Cone::Zero);
    }
    for (local, cs) in index.block(b).iter().enumerate() {
        let (_, j) = index.pairs()[cs.pair];
        let start = rows.len();
        match cs.role {
            CopyRole::Owner => {
                rows.slack(&[(t0 + local, 1.0)], 0.0);
                for slot in 0..users.len() {
                    let (re, im) = re_im(h.get(b, j), map.beam_offset(slot));
                    rows.slack(&re, 0.0);
                    rows.slack(&im, 0.0);
                }
                rows.close(start, Cone::SecondOrder);
            }
            CopyRole::Sufferer => {
                rows.slack(&[(t0 + local, 1.0)], 0.0);
                rows.close(start, Cone::NonNeg);
            }
        }
    }
    let y = index.expand_block(b, tau);
    let cq = (rho / 2.0).sqrt();
    let mut x: Vec<(Vec<(usize, f64)>, f64)> = (0..t0).map(|j| (vec![(j, 1.0)], 0.0)).collect();
    for i in 0..len {
        let yi = y[i] - nu_b[i] / rho;
        x.push((vec![(t0 + i, cq)], -cq * yi));
    }
    epigraph(&mut rows, p, &x);
    let mut c = DVector::zeros(p + 1);
    c[p] = 1.0;
    Ok((rows.finish(c)?, map))
}
