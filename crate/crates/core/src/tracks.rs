//! Seeded AR(1) channel tracks with feasibility rejection.
//!
//! Randomness comes from ChaCha20 keyed by the experiment seed, with the
//! stream set to the track number and the word position to `step << 40`.
//! Every (track, step) pair therefore owns an independent, reproducible
//! block of the keystream, whatever order the tracks are generated in.
//! Step 0 draws the initial channel; step `i >= 1` draws the innovation of
//! the i-th update.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::duality::is_feasible;
use crate::error::{Error, Result};
use crate::model::{ChannelSet, Scenario, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    /// Innovation weight in `[0, 1]`.
    pub zeta: f64,
    /// Number of channels in the track.
    pub length: usize,
    pub seed: u64,
    /// Consecutive rejected draws tolerated before giving up.
    pub max_rejections: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            zeta: 0.01,
            length: 50,
            seed: 0,
            max_rejections: 1000,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::InvalidParameter(format!("zeta must lie in [0, 1], got {}", self.zeta)));
        }
        if self.length == 0 {
            return Err(Error::InvalidParameter("track length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator for `(seed, track, step)`.
pub fn track_rng(seed: u64, track: u64, step: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(track);
    rng.set_word_pos((step as u128) << 40);
    rng
}

/// Circularly symmetric complex Gaussian with `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Channel set with i.i.d. unit-variance complex Gaussian entries.
pub fn sample_gaussian<R: Rng + ?Sized>(topo: &Topology, rng: &mut R) -> ChannelSet {
    let mut h = ChannelSet::for_topology(topo);
    for z in h.as_mut_slice() {
        *z = complex_gaussian(rng);
    }
    h
}

/// Gaussian channel set determined by `seed`.
pub fn sample_initial(topo: &Topology, seed: u64) -> ChannelSet {
    sample_gaussian(topo, &mut track_rng(seed, 0, 0))
}

/// `sqrt(zeta) innovation + sqrt(1 - zeta) prev`.
pub fn ar1_update(prev: &ChannelSet, innovation: &ChannelSet, zeta: f64) -> ChannelSet {
    let a = zeta.sqrt();
    let b = (1.0 - zeta).sqrt();
    let mut out = prev.clone();
    for (o, i) in out.as_mut_slice().iter_mut().zip(innovation.as_slice()) {
        *o = *o * b + i * a;
    }
    out
}

/// `E |h^[i] - h^[i-1]|^2` per complex entry for a stationary unit-variance
/// process: `zeta + (1 - sqrt(1 - zeta))^2 = 2 (1 - sqrt(1 - zeta))`.
pub fn increment_second_moment(zeta: f64) -> f64 {
    2.0 * (1.0 - (1.0 - zeta).sqrt())
}

/// One track update, redrawing the innovation until the channel is feasible.
pub fn step<R: Rng + ?Sized>(
    prev: &ChannelSet,
    scenario: &Scenario,
    cfg: &TrackConfig,
    rng: &mut R,
) -> Result<ChannelSet> {
    for _ in 0..=cfg.max_rejections {
        let innovation = sample_gaussian(&scenario.topology, rng);
        let next = ar1_update(prev, &innovation, cfg.zeta);
        if is_feasible(&next, scenario) {
            return Ok(next);
        }
    }
    Err(Error::RejectionLimit(cfg.max_rejections + 1))
}

/// Feasible initial channel followed by `length - 1` feasible updates.
pub fn generate_track(scenario: &Scenario, cfg: &TrackConfig, track: u64) -> Result<Vec<ChannelSet>> {
    cfg.validate()?;
    let topo = &scenario.topology;
    let mut rng = track_rng(cfg.seed, track, 0);
    let mut first = None;
    for _ in 0..=cfg.max_rejections {
        let h = sample_gaussian(topo, &mut rng);
        if is_feasible(&h, scenario) {
            first = Some(h);
            break;
        }
    }
    let first = first.ok_or(Error::RejectionLimit(cfg.max_rejections + 1))?;
    let mut out = Vec::with_capacity(cfg.length);
    out.push(first);
    for i in 1..cfg.length {
        let mut rng = track_rng(cfg.seed, track, i);
        let next = step(&out[i - 1], scenario, cfg, &mut rng)?;
        out.push(next);
    }
    Ok(out)
}
