//! Network model: topology, channels, QoS targets, beamformers, SINR
//! evaluation and the consensus index maps that tie interference copies
//! (`t`) to consistency variables (`tau`) through the selection matrix `E`.
//!
//! Base stations and users are 0-indexed throughout the library.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `a^H b` for equal-length complex slices.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Base stations, users, antennas and the user-to-base-station assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    base_stations: usize,
    antennas: usize,
    assign: Vec<usize>,
    served: Vec<Vec<usize>>,
}

impl Topology {
    /// `assign[k]` is the serving base station of user `k`.
    pub fn new(base_stations: usize, antennas: usize, assign: Vec<usize>) -> Result<Self> {
        if base_stations == 0 || antennas == 0 || assign.is_empty() {
            return Err(Error::Topology(
                "need at least one base station, one antenna and one user".into(),
            ));
        }
        let mut served = vec![Vec::new(); base_stations];
        for (k, &b) in assign.iter().enumerate() {
            if b >= base_stations {
                return Err(Error::Topology(format!(
                    "user {} assigned to base station {} of {}",
                    k + 1,
                    b + 1,
                    base_stations
                )));
            }
            served[b].push(k);
        }
        Ok(Self {
            base_stations,
            antennas,
            assign,
            served,
        })
    }

    /// Every base station serves `users_per_bs` consecutive users.
    pub fn uniform(base_stations: usize, users_per_bs: usize, antennas: usize) -> Result<Self> {
        let assign = (0..base_stations)
            .flat_map(|b| std::iter::repeat_n(b, users_per_bs))
            .collect();
        Self::new(base_stations, antennas, assign)
    }

    pub fn base_stations(&self) -> usize {
        self.base_stations
    }

    pub fn users(&self) -> usize {
        self.assign.len()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// Serving base station `b(k)`.
    pub fn serving(&self, k: usize) -> usize {
        self.assign[k]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    /// Users served by base station `b`, ascending.
    pub fn served(&self, b: usize) -> &[usize] {
        &self.served[b]
    }
}

/// Per-user SINR targets and noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    pub gamma: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl QosSpec {
    pub fn new(gamma: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if gamma.len() != sigma2.len() {
            return Err(Error::Dimension(format!(
                "{} SINR targets but {} noise variances",
                gamma.len(),
                sigma2.len()
            )));
        }
        if gamma.iter().chain(&sigma2).any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter(
                "SINR targets and noise variances must be finite and positive".into(),
            ));
        }
        Ok(Self { gamma, sigma2 })
    }

    pub fn uniform(users: usize, gamma: f64, sigma2: f64) -> Result<Self> {
        Self::new(vec![gamma; users], vec![sigma2; users])
    }

    pub fn users(&self) -> usize {
        self.gamma.len()
    }
}

/// A topology paired with the QoS requirements of its users.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub qos: QosSpec,
}

impl Scenario {
    pub fn new(topology: Topology, qos: QosSpec) -> Result<Self> {
        if topology.users() != qos.users() {
            return Err(Error::Dimension(format!(
                "topology has {} users, QoS spec has {}",
                topology.users(),
                qos.users()
            )));
        }
        Ok(Self { topology, qos })
    }

    /// Uniform assignment with equal targets and noise for every user.
    pub fn uniform(
        base_stations: usize,
        users_per_bs: usize,
        antennas: usize,
        gamma: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let topology = Topology::uniform(base_stations, users_per_bs, antennas)?;
        let qos = QosSpec::uniform(topology.users(), gamma, sigma2)?;
        Ok(Self { topology, qos })
    }
}

/// Channel vectors `h_mk` from every base station `m` to every user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    base_stations: usize,
    users: usize,
    antennas: usize,
    data: Vec<Complex64>,
}

impl ChannelSet {
    pub fn zeros(base_stations: usize, users: usize, antennas: usize) -> Self {
        Self {
            base_stations,
            users,
            antennas,
            data: vec![Complex64::new(0.0, 0.0); base_stations * users * antennas],
        }
    }

    /// Row-major `(m, k, antenna)` data.
    pub fn from_vec(
        base_stations: usize,
        users: usize,
        antennas: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != base_stations * users * antennas {
            return Err(Error::Dimension(format!(
                "channel data has {} entries, expected {}",
                data.len(),
                base_stations * users * antennas
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("channel set"));
        }
        Ok(Self {
            base_stations,
            users,
            antennas,
            data,
        })
    }

    pub fn for_topology(topo: &Topology) -> Self {
        Self::zeros(topo.base_stations(), topo.users(), topo.antennas())
    }

    pub fn base_stations(&self) -> usize {
        self.base_stations
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `h_mk`.
    pub fn get(&self, m: usize, k: usize) -> &[Complex64] {
        let off = (m * self.users + k) * self.antennas;
        &self.data[off..off + self.antennas]
    }

    pub fn get_mut(&mut self, m: usize, k: usize) -> &mut [Complex64] {
        let off = (m * self.users + k) * self.antennas;
        &mut self.data[off..off + self.antennas]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Multiplies every channel by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= alpha);
        out
    }

    /// Squared Frobenius norm of the difference.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    pub fn check(&self, topo: &Topology) -> Result<()> {
        if self.base_stations != topo.base_stations()
            || self.users != topo.users()
            || self.antennas != topo.antennas()
        {
            return Err(Error::Dimension(format!(
                "channel set is {}x{}x{}, topology is {}x{}x{}",
                self.base_stations,
                self.users,
                self.antennas,
                topo.base_stations(),
                topo.users(),
                topo.antennas()
            )));
        }
        Ok(())
    }
}

/// Transmit beamformer `w_k` for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    antennas: usize,
    data: Vec<Complex64>,
}

impl BeamformerSet {
    pub fn zeros(users: usize, antennas: usize) -> Self {
        Self {
            antennas,
            data: vec![Complex64::new(0.0, 0.0); users * antennas],
        }
    }

    pub fn from_vec(users: usize, antennas: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != users * antennas {
            return Err(Error::Dimension(format!(
                "beamformer data has {} entries, expected {}",
                data.len(),
                users * antennas
            )));
        }
        Ok(Self { antennas, data })
    }

    pub fn users(&self) -> usize {
        self.data.len() / self.antennas
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn get(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn get_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.data[k * self.antennas..(k + 1) * self.antennas]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// `||w_k||^2`.
    pub fn power(&self, k: usize) -> f64 {
        self.get(k).iter().map(|z| z.norm_sqr()).sum()
    }

    /// `sum_k ||w_k||^2`.
    pub fn total_power(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `||W - other||_F^2`.
    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }

    fn check(&self, topo: &Topology) -> Result<()> {
        if self.antennas != topo.antennas() || self.users() != topo.users() {
            return Err(Error::Dimension(format!(
                "beamformer set is {}x{}, topology has {} users with {} antennas",
                self.users(),
                self.antennas,
                topo.users(),
                topo.antennas()
            )));
        }
        Ok(())
    }
}

/// Received power at user `k` from the beams of the users in `beams`, all
/// transmitted by base station `m`.
fn received_power(h: &ChannelSet, w: &BeamformerSet, m: usize, k: usize, beams: &[usize]) -> f64 {
    let hmk = h.get(m, k);
    beams.iter().map(|&i| inner(hmk, w.get(i)).norm_sqr()).sum()
}

/// True intercell interference power `sum_{i in U(m)} |h_mk^H w_i|^2`.
pub fn intercell_power(h: &ChannelSet, w: &BeamformerSet, topo: &Topology, m: usize, k: usize) -> f64 {
    received_power(h, w, m, k, topo.served(m))
}

/// SINR of user `k` under beamformers `w` and channels `h`.
pub fn compute_sinr(w: &BeamformerSet, h: &ChannelSet, scenario: &Scenario, k: usize) -> Result<f64> {
    let topo = &scenario.topology;
    h.check(topo)?;
    w.check(topo)?;
    if k >= topo.users() {
        return Err(Error::Dimension(format!("user {} of {}", k + 1, topo.users())));
    }
    let b = topo.serving(k);
    let hbk = h.get(b, k);
    let signal = inner(hbk, w.get(k)).norm_sqr();
    let mut denom = scenario.qos.sigma2[k];
    for &i in topo.served(b) {
        if i != k {
            denom += inner(hbk, w.get(i)).norm_sqr();
        }
    }
    for m in (0..topo.base_stations()).filter(|&m| m != b) {
        denom += intercell_power(h, w, topo, m, k);
    }
    Ok(signal / denom)
}

/// SINR of every user.
pub fn compute_all_sinr(w: &BeamformerSet, h: &ChannelSet, scenario: &Scenario) -> Result<Vec<f64>> {
    (0..scenario.topology.users())
        .map(|k| compute_sinr(w, h, scenario, k))
        .collect()
}

/// SINR of user `k` as seen by base station `b`, with intercell interference
/// replaced by the base station's copies `t_mk^(b)` held in `t_b`.
pub fn compute_local_sinr(
    b: usize,
    w: &BeamformerSet,
    h: &ChannelSet,
    t_b: &[f64],
    scenario: &Scenario,
    index: &ConsensusIndex,
    k: usize,
) -> Result<f64> {
    let topo = &scenario.topology;
    h.check(topo)?;
    w.check(topo)?;
    if k >= topo.users() || topo.serving(k) != b {
        return Err(Error::MissingIndex { bs: b, user: k });
    }
    if t_b.len() != index.block_len(b) {
        return Err(Error::Dimension(format!(
            "t_b has {} entries, base station {} holds {}",
            t_b.len(),
            b + 1,
            index.block_len(b)
        )));
    }
    let hbk = h.get(b, k);
    let signal = inner(hbk, w.get(k)).norm_sqr();
    let mut denom = scenario.qos.sigma2[k];
    for &i in topo.served(b) {
        if i != k {
            denom += inner(hbk, w.get(i)).norm_sqr();
        }
    }
    for m in (0..topo.base_stations()).filter(|&m| m != b) {
        let local = index
            .local_slot(b, m, k)
            .ok_or(Error::MissingIndex { bs: b, user: k })?;
        denom += t_b[local] * t_b[local];
    }
    Ok(signal / denom)
}

/// Which side of a cross pair a copy of `t` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopyRole {
    /// `t_mk^(m)`: held by the interfering base station `m`.
    Owner,
    /// `t_mk^(b(k))`: held by the base station serving the victim user.
    Sufferer,
}

/// One entry of a base station's local copy vector `t_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopySlot {
    /// Index into the cross-pair list, i.e. the column of `E`.
    pub pair: usize,
    pub role: CopyRole,
}

/// Index maps defining `t`, `tau` and the selection matrix `E` with
/// `E tau = t`.
///
/// Cross pairs `(m, k)` with `m != b(k)` are ordered lexicographically; each
/// owns one entry of `tau`. `t` is the concatenation of the per-base-station
/// blocks `t_1, ..., t_B`; inside a block the copies follow the pair order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusIndex {
    pairs: Vec<(usize, usize)>,
    owner_slot: Vec<usize>,
    sufferer_slot: Vec<usize>,
    slot_pair: Vec<usize>,
    blocks: Vec<Vec<CopySlot>>,
    offsets: Vec<usize>,
    pair_lookup: Vec<Option<usize>>,
    users: usize,
}

impl ConsensusIndex {
    pub fn build(topo: &Topology) -> Self {
        let nb = topo.base_stations();
        let nk = topo.users();
        let mut pairs = Vec::new();
        let mut pair_lookup = vec![None; nb * nk];
        for m in 0..nb {
            for k in 0..nk {
                if topo.serving(k) != m {
                    pair_lookup[m * nk + k] = Some(pairs.len());
                    pairs.push((m, k));
                }
            }
        }
        let mut blocks = vec![Vec::new(); nb];
        for (p, &(m, k)) in pairs.iter().enumerate() {
            blocks[m].push(CopySlot {
                pair: p,
                role: CopyRole::Owner,
            });
            blocks[topo.serving(k)].push(CopySlot {
                pair: p,
                role: CopyRole::Sufferer,
            });
        }
        // pairs are pushed in order, so each block is already sorted by pair
        let mut offsets = Vec::with_capacity(nb + 1);
        let mut owner_slot = vec![0; pairs.len()];
        let mut sufferer_slot = vec![0; pairs.len()];
        let mut slot_pair = Vec::with_capacity(2 * pairs.len());
        let mut pos = 0;
        for block in &blocks {
            offsets.push(pos);
            for slot in block {
                match slot.role {
                    CopyRole::Owner => owner_slot[slot.pair] = pos,
                    CopyRole::Sufferer => sufferer_slot[slot.pair] = pos,
                }
                slot_pair.push(slot.pair);
                pos += 1;
            }
        }
        offsets.push(pos);
        Self {
            pairs,
            owner_slot,
            sufferer_slot,
            slot_pair,
            blocks,
            offsets,
            pair_lookup,
            users: nk,
        }
    }

    /// `dim(tau) = (B-1) K`.
    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// `dim(t) = 2 (B-1) K`.
    pub fn num_copies(&self) -> usize {
        self.slot_pair.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_index(&self, m: usize, k: usize) -> Option<usize> {
        self.pair_lookup.get(m * self.users + k).copied().flatten()
    }

    pub fn owner_slot(&self, pair: usize) -> usize {
        self.owner_slot[pair]
    }

    pub fn sufferer_slot(&self, pair: usize) -> usize {
        self.sufferer_slot[pair]
    }

    /// Column of `E` hit by row `slot`.
    pub fn slot_pair(&self, slot: usize) -> usize {
        self.slot_pair[slot]
    }

    pub fn block(&self, b: usize) -> &[CopySlot] {
        &self.blocks[b]
    }

    /// `dim(t_b) = K + |U(b)| (B-2)`.
    pub fn block_len(&self, b: usize) -> usize {
        self.blocks[b].len()
    }

    /// Range of `t_b` inside `t`.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    /// Position of the copy of pair `(m, k)` inside `t_b`, if `b` holds one.
    pub fn local_slot(&self, b: usize, m: usize, k: usize) -> Option<usize> {
        let p = self.pair_index(m, k)?;
        self.blocks[b].iter().position(|s| s.pair == p)
    }

    /// `E tau`.
    pub fn expand(&self, tau: &[f64]) -> Vec<f64> {
        self.slot_pair.iter().map(|&p| tau[p]).collect()
    }

    /// `E_b tau`.
    pub fn expand_block(&self, b: usize, tau: &[f64]) -> Vec<f64> {
        self.blocks[b].iter().map(|s| tau[s.pair]).collect()
    }

    /// `E^T nu`: sums the two copies of every pair.
    pub fn transpose_apply(&self, nu: &[f64]) -> Vec<f64> {
        (0..self.pairs.len())
            .map(|p| nu[self.owner_slot[p]] + nu[self.sufferer_slot[p]])
            .collect()
    }

    /// `E^+ t = E^T t / 2`: the mean of the two copies of every pair.
    pub fn average(&self, t: &[f64]) -> Vec<f64> {
        (0..self.pairs.len())
            .map(|p| 0.5 * (t[self.owner_slot[p]] + t[self.sufferer_slot[p]]))
            .collect()
    }

    /// Dense `E`, `2(B-1)K x (B-1)K`.
    pub fn selection_matrix(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.num_copies(), self.num_pairs());
        for (slot, &p) in self.slot_pair.iter().enumerate() {
            e[(slot, p)] = 1.0;
        }
        e
    }
}

/// Interference copies, consistency variables and their duals.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceState {
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
}

impl InterferenceState {
    pub fn zeros(index: &ConsensusIndex) -> Self {
        Self {
            t: vec![0.0; index.num_copies()],
            tau: vec![0.0; index.num_pairs()],
            nu: vec![0.0; index.num_copies()],
        }
    }
}

/// Exact interference copies for beamformers `w`: both copies of pair
/// `(m, k)` equal `sqrt(sum_{i in U(m)} |h_mk^H w_i|^2)`.
pub fn exact_consistency(
    w: &BeamformerSet,
    h: &ChannelSet,
    topo: &Topology,
    index: &ConsensusIndex,
) -> Vec<f64> {
    index
        .pairs()
        .iter()
        .map(|&(m, k)| intercell_power(h, w, topo, m, k).sqrt())
        .collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channels(topo: &Topology, seed: u64) -> ChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = ChannelSet::for_topology(topo);
        for z in h.as_mut_slice() {
            *z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        h
    }

    fn random_beams(topo: &Topology, seed: u64) -> BeamformerSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = BeamformerSet::zeros(topo.users(), topo.antennas());
        for k in 0..topo.users() {
            for z in w.get_mut(k) {
                *z = Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        w
    }

    #[test]
    fn single_user_sinr() {
        let sc = Scenario::uniform(1, 1, 3, 10.0, 10.0).unwrap();
        let mut h = ChannelSet::for_topology(&sc.topology);
        h.get_mut(0, 0)[0] = Complex64::new(1.0, 0.0);
        let mut w = BeamformerSet::zeros(1, 3);
        w.get_mut(0)[0] = Complex64::new(10.0, 0.0);
        assert_eq!(compute_sinr(&w, &h, &sc, 0).unwrap(), 10.0);
    }

    #[test]
    fn zero_beam_gives_zero_sinr() {
        let sc = Scenario::uniform(2, 2, 4, 10.0, 10.0).unwrap();
        let h = random_channels(&sc.topology, 1);
        let mut w = random_beams(&sc.topology, 2);
        w.get_mut(2).iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        assert_eq!(compute_sinr(&w, &h, &sc, 2).unwrap(), 0.0);
    }

    #[test]
    fn sinr_matches_term_by_term_evaluation() {
        // B=2, K=2, one user per cell, written out by hand.
        let sc = Scenario::new(
            Topology::new(2, 2, vec![0, 1]).unwrap(),
            QosSpec::new(vec![3.0, 5.0], vec![0.7, 1.3]).unwrap(),
        )
        .unwrap();
        let h = random_channels(&sc.topology, 11);
        let w = random_beams(&sc.topology, 12);
        let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..a.len() {
                s += a[i].conj() * b[i];
            }
            s
        };
        let s0 = dot(h.get(0, 0), w.get(0)).norm_sqr()
            / (dot(h.get(1, 0), w.get(1)).norm_sqr() + 0.7);
        let s1 = dot(h.get(1, 1), w.get(1)).norm_sqr()
            / (dot(h.get(0, 1), w.get(0)).norm_sqr() + 1.3);
        assert!((compute_sinr(&w, &h, &sc, 0).unwrap() - s0).abs() <= 1e-14 * s0);
        assert!((compute_sinr(&w, &h, &sc, 1).unwrap() - s1).abs() <= 1e-14 * s1);
    }

    #[test]
    fn sinr_dimension_mismatch_is_an_error() {
        let sc = Scenario::uniform(2, 1, 4, 10.0, 10.0).unwrap();
        let h = ChannelSet::zeros(2, 2, 3);
        let w = BeamformerSet::zeros(2, 4);
        assert!(matches!(compute_sinr(&w, &h, &sc, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn local_sinr_with_zero_copies_is_intracell_only() {
        let sc = Scenario::uniform(2, 2, 4, 10.0, 10.0).unwrap();
        let idx = ConsensusIndex::build(&sc.topology);
        let h = random_channels(&sc.topology, 3);
        let w = random_beams(&sc.topology, 4);
        let t0 = vec![0.0; idx.block_len(0)];
        let local = compute_local_sinr(0, &w, &h, &t0, &sc, &idx, 1).unwrap();
        let hk = h.get(0, 1);
        let expect = inner(hk, w.get(1)).norm_sqr() / (inner(hk, w.get(0)).norm_sqr() + 10.0);
        assert!((local - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn local_sinr_noise_sized_copy_doubles_denominator() {
        let sc = Scenario::uniform(2, 1, 2, 10.0, 4.0).unwrap();
        let idx = ConsensusIndex::build(&sc.topology);
        let h = random_channels(&sc.topology, 5);
        let w = random_beams(&sc.topology, 6);
        let zero = compute_local_sinr(0, &w, &h, &vec![0.0; idx.block_len(0)], &sc, &idx, 0).unwrap();
        let mut t = vec![0.0; idx.block_len(0)];
        t[idx.local_slot(0, 1, 0).unwrap()] = 2.0;
        let full = compute_local_sinr(0, &w, &h, &t, &sc, &idx, 0).unwrap();
        assert!((zero / full - 2.0).abs() < 1e-14);
    }

    #[test]
    fn local_sinr_rejects_foreign_user() {
        let sc = Scenario::uniform(2, 1, 2, 10.0, 4.0).unwrap();
        let idx = ConsensusIndex::build(&sc.topology);
        let h = random_channels(&sc.topology, 5);
        let w = random_beams(&sc.topology, 6);
        let t = vec![0.0; idx.block_len(0)];
        assert!(matches!(
            compute_local_sinr(0, &w, &h, &t, &sc, &idx, 1),
            Err(Error::MissingIndex { bs: 0, user: 1 })
        ));
    }

    #[test]
    fn local_sinr_equals_global_with_exact_copies() {
        let sc = Scenario::uniform(3, 2, 3, 10.0, 2.0).unwrap();
        let idx = ConsensusIndex::build(&sc.topology);
        let h = random_channels(&sc.topology, 7);
        let w = random_beams(&sc.topology, 8);
        let tau = exact_consistency(&w, &h, &sc.topology, &idx);
        let t = idx.expand(&tau);
        for k in 0..sc.topology.users() {
            let b = sc.topology.serving(k);
            let local = compute_local_sinr(b, &w, &h, &t[idx.block_range(b)], &sc, &idx, k).unwrap();
            let global = compute_sinr(&w, &h, &sc, k).unwrap();
            assert!((local - global).abs() <= 1e-12 * global, "user {k}: {local} vs {global}");
        }
    }

    #[test]
    fn index_two_cells_one_user_each() {
        let topo = Topology::uniform(2, 1, 4).unwrap();
        let idx = ConsensusIndex::build(&topo);
        assert_eq!(idx.num_pairs(), 2);
        assert_eq!(idx.num_copies(), 4);
        let e = idx.selection_matrix();
        for c in 0..2 {
            assert_eq!(e.column(c).sum(), 2.0);
        }
    }

    #[test]
    fn index_single_cell_is_empty() {
        let topo = Topology::uniform(1, 3, 4).unwrap();
        let idx = ConsensusIndex::build(&topo);
        assert_eq!(idx.num_pairs(), 0);
        assert_eq!(idx.num_copies(), 0);
        assert_eq!(idx.block_len(0), 0);
        assert_eq!(idx.selection_matrix().len(), 0);
    }

    #[test]
    fn index_block_dimensions() {
        let topo = Topology::uniform(2, 2, 4).unwrap();
        let idx = ConsensusIndex::build(&topo);
        assert_eq!(idx.num_pairs(), 4);
        assert_eq!(idx.num_copies(), 8);
        assert_eq!(idx.block_len(0), 4);
        assert_eq!(idx.block_len(1), 4);

        let topo = Topology::new(3, 2, vec![0, 0, 1, 2, 2, 2]).unwrap();
        let idx = ConsensusIndex::build(&topo);
        for b in 0..3 {
            assert_eq!(idx.block_len(b), 6 + topo.served(b).len());
        }
        assert_eq!(idx.num_copies(), 2 * 2 * 6);
    }

    #[test]
    fn selection_matrix_structure() {
        let topo = Topology::new(3, 2, vec![0, 1, 1, 2]).unwrap();
        let idx = ConsensusIndex::build(&topo);
        let e = idx.selection_matrix();
        for r in 0..e.nrows() {
            assert_eq!(e.row(r).sum(), 1.0);
        }
        let ete = e.transpose() * &e;
        assert_eq!(ete, DMatrix::identity(idx.num_pairs(), idx.num_pairs()) * 2.0);
        // lexicographic pair order
        let pairs = idx.pairs();
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        // concatenated blocks E_b recover E
        for b in 0..3 {
            for (local, slot) in idx.block(b).iter().enumerate() {
                let row = idx.block_range(b).start + local;
                assert_eq!(e[(row, slot.pair)], 1.0);
            }
        }
    }

    #[test]
    fn owner_and_sufferer_live_in_the_right_blocks() {
        let topo = Topology::new(3, 2, vec![0, 1, 1, 2]).unwrap();
        let idx = ConsensusIndex::build(&topo);
        for (p, &(m, k)) in idx.pairs().iter().enumerate() {
            assert!(idx.block_range(m).contains(&idx.owner_slot(p)));
            assert!(idx.block_range(topo.serving(k)).contains(&idx.sufferer_slot(p)));
            assert_eq!(idx.local_slot(m, m, k).map(|s| s + idx.block_range(m).start), Some(idx.owner_slot(p)));
        }
    }

    #[test]
    fn bad_topologies_are_rejected() {
        assert!(Topology::new(0, 1, vec![]).is_err());
        assert!(Topology::new(2, 1, vec![0, 2]).is_err());
        assert!(QosSpec::new(vec![1.0], vec![0.0]).is_err());
        assert!(QosSpec::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn averaging_inverts_expansion(tau in prop::collection::vec(-10.0f64..10.0, 4)) {
                let topo = Topology::uniform(2, 2, 4).unwrap();
                let idx = ConsensusIndex::build(&topo);
                let back = idx.average(&idx.expand(&tau));
                prop_assert_eq!(back, tau);
            }

            #[test]
            fn averaging_matches_half_transpose(t in prop::collection::vec(-10.0f64..10.0, 12)) {
                let topo = Topology::new(3, 1, vec![0, 1, 2]).unwrap();
                let idx = ConsensusIndex::build(&topo);
                let e = idx.selection_matrix();
                let dense = e.transpose() * nalgebra::DVector::from_vec(t.clone()) * 0.5;
                let avg = idx.average(&t);
                for (a, b) in avg.iter().zip(dense.iter()) {
                    prop_assert!((a - b).abs() < 1e-14);
                }
            }

            #[test]
            fn sinr_invariant_to_beam_phase(phi in 0.0f64..std::f64::consts::TAU, k in 0usize..4, seed in 0u64..1000) {
                let sc = Scenario::uniform(2, 2, 3, 10.0, 1.0).unwrap();
                let h = random_channels(&sc.topology, seed);
                let w = random_beams(&sc.topology, seed + 1);
                let mut rotated = w.clone();
                let rot = Complex64::from_polar(1.0, phi);
                rotated.get_mut(k).iter_mut().for_each(|z| *z *= rot);
                for u in 0..4 {
                    let a = compute_sinr(&w, &h, &sc, u).unwrap();
                    let b = compute_sinr(&rotated, &h, &sc, u).unwrap();
                    prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
                }
            }
        }
    }
}
