//! Tracking experiments: one ADMM iteration per channel of a track, with
//! the oracle optimum and the bound checks evaluated at every step.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::admm::{admm_step, lyapunov_of, AdmmConfig, AdmmState};
use crate::duality::{consensus_reference, solve_uplink_fixed_point, DualOptions, Outcome};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::{ChannelSet, ConsensusIndex, Scenario};
use crate::tracks::{generate_track, TrackConfig};

/// Worst-case SINR implied by disagreement `v`:
/// `gamma (1 - 4 v / (rho sigma^2 + 4 v))`.
pub fn eval_sinr_bound(v: f64, rho: f64, gamma: f64, sigma2: f64) -> f64 {
    let d = rho * sigma2 + 4.0 * v;
    gamma * (1.0 - 4.0 * v / d)
}

/// Slack used by the per-step bound checks.
pub fn bound_slack(scale: f64) -> f64 {
    1e-6 * scale.max(1.0)
}

/// Metrics of one track step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub power_admm: f64,
    pub power_opt: f64,
    pub sinr: Vec<f64>,
    pub sinr_mean: f64,
    /// `||W^i - W*^i||_F^2`.
    pub dist_w_sq: f64,
    /// `V(nu^{i-1}, tau^{i-1})` against the optimum of the current channel.
    pub lyapunov: f64,
    pub primal_residual: f64,
    /// `(1 + 1/rho) V`.
    pub distance_bound: f64,
    /// Per-user value of [`eval_sinr_bound`].
    pub sinr_bound: Vec<f64>,
    /// `||E^T nu^i||_inf / max(1, ||nu^i||_inf)`.
    pub dual_balance: f64,
}

impl StepMetrics {
    pub fn distance_bound_holds(&self) -> bool {
        self.dist_w_sq <= self.distance_bound + bound_slack(self.lyapunov)
    }

    /// Users whose SINR falls below their bound.
    pub fn sinr_bound_violations(&self) -> usize {
        self.sinr
            .iter()
            .zip(&self.sinr_bound)
            .filter(|(s, b)| **s < **b - bound_slack(**b))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub track_id: u64,
    pub rho: f64,
    pub steps: Vec<StepMetrics>,
}

/// Runs one ADMM iteration per channel of `track`, starting from
/// `tau = 0`, `nu = 0`.
pub fn run_track(
    track: &[ChannelSet],
    scenario: &Scenario,
    index: &ConsensusIndex,
    cfg: &AdmmConfig,
    track_id: u64,
) -> Result<TrackResult> {
    let mut state = AdmmState::initial(scenario, index);
    let mut steps = Vec::with_capacity(track.len());
    for h in track {
        let Outcome::Feasible(dual) = solve_uplink_fixed_point(h, scenario, &DualOptions::default())? else {
            return Err(Error::InvalidParameter("track contains an infeasible channel".into()));
        };
        let star = consensus_reference(&dual, h, scenario, index);
        let v = lyapunov_of(&state.vars, &star, cfg.rho, index);
        let (next, rec) = admm_step(&state, h, scenario, index, cfg)?;
        let qos = &scenario.qos;
        let sinr_bound = (0..qos.users())
            .map(|k| eval_sinr_bound(v, cfg.rho, qos.gamma[k], qos.sigma2[k]))
            .collect();
        let nu_inf = crate::model::norm_inf(&rec.vars.nu);
        steps.push(StepMetrics {
            power_admm: rec.total_power,
            power_opt: dual.total_power(),
            sinr_mean: rec.sinr.iter().sum::<f64>() / rec.sinr.len() as f64,
            sinr: rec.sinr,
            dist_w_sq: rec.w.distance_sq(&dual.w_star),
            lyapunov: v,
            primal_residual: rec.primal_residual,
            distance_bound: (1.0 + 1.0 / cfg.rho) * v,
            sinr_bound,
            dual_balance: rec.dual_balance / nu_inf.max(1.0),
        });
        state = next;
    }
    Ok(TrackResult {
        track_id,
        rho: cfg.rho,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub track: TrackConfig,
    pub rhos: Vec<f64>,
    pub tracks: usize,
    /// Base ADMM settings; `rho` is overridden per sweep entry.
    pub admm: AdmmConfig,
    /// Track-level execution.
    pub execution: Execution,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tracks == 0 {
            return Err(Error::InvalidParameter("at least one track is required".into()));
        }
        if self.rhos.is_empty() {
            return Err(Error::InvalidParameter("at least one rho is required".into()));
        }
        for &rho in &self.rhos {
            AdmmConfig { rho, ..self.admm }.validate()?;
        }
        self.track.validate()
    }
}

/// Per-step statistics across tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub mean_power_admm: f64,
    pub mean_power_opt: f64,
    pub mean_sinr: f64,
    pub std_sinr: f64,
}

/// All tracks for one value of `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rho: f64,
    pub tracks: Vec<TrackResult>,
}

impl SweepResult {
    pub fn summary(&self) -> Vec<StepSummary> {
        let len = self.tracks.first().map_or(0, |t| t.steps.len());
        (0..len)
            .map(|i| {
                let n = self.tracks.len() as f64;
                let mean = |f: &dyn Fn(&StepMetrics) -> f64| self.tracks.iter().map(|t| f(&t.steps[i])).sum::<f64>() / n;
                let sinrs: Vec<f64> = self.tracks.iter().flat_map(|t| t.steps[i].sinr.iter().copied()).collect();
                let m = sinrs.iter().sum::<f64>() / sinrs.len() as f64;
                let var = sinrs.iter().map(|s| (s - m).powi(2)).sum::<f64>() / sinrs.len() as f64;
                StepSummary {
                    mean_power_admm: mean(&|s| s.power_admm),
                    mean_power_opt: mean(&|s| s.power_opt),
                    mean_sinr: m,
                    std_sinr: var.sqrt(),
                }
            })
            .collect()
    }

    /// Aggregates over the steps in `window` (0-based, half open).
    pub fn window_stats(&self, window: std::ops::Range<usize>) -> WindowStats {
        let mut stats = WindowStats::default();
        let mut n = 0usize;
        let mut n_users = 0usize;
        for t in &self.tracks {
            for s in &t.steps[window.clone()] {
                stats.mean_power_admm += s.power_admm;
                stats.mean_power_opt += s.power_opt;
                stats.mean_sinr += s.sinr.iter().sum::<f64>();
                stats.min_sinr = stats.min_sinr.min(s.sinr.iter().copied().fold(f64::INFINITY, f64::min));
                stats.sinr_bound_violations += s.sinr_bound_violations();
                n += 1;
                n_users += s.sinr.len();
            }
        }
        stats.mean_power_admm /= n as f64;
        stats.mean_power_opt /= n as f64;
        stats.mean_sinr /= n_users as f64;
        for t in &self.tracks {
            for s in &t.steps {
                stats.sinr_bound_violations_total += s.sinr_bound_violations();
                stats.distance_bound_violations += usize::from(!s.distance_bound_holds());
                stats.max_dual_balance = stats.max_dual_balance.max(s.dual_balance);
            }
        }
        stats
    }
}

/// Window averages plus whole-run violation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub mean_power_admm: f64,
    pub mean_power_opt: f64,
    pub mean_sinr: f64,
    pub min_sinr: f64,
    /// SINR bound violations inside the window.
    pub sinr_bound_violations: usize,
    /// The remaining fields cover all steps, not only the window.
    pub sinr_bound_violations_total: usize,
    pub distance_bound_violations: usize,
    pub max_dual_balance: f64,
}

impl Default for WindowStats {
    fn default() -> Self {
        Self {
            mean_power_admm: 0.0,
            mean_power_opt: 0.0,
            mean_sinr: 0.0,
            min_sinr: f64::INFINITY,
            sinr_bound_violations: 0,
            sinr_bound_violations_total: 0,
            distance_bound_violations: 0,
            max_dual_balance: 0.0,
        }
    }
}

impl WindowStats {
    pub fn relative_power_gap(&self) -> f64 {
        (self.mean_power_admm - self.mean_power_opt).abs() / self.mean_power_opt
    }
}

/// Generates `cfg.tracks` tracks once and runs each of them for every `rho`.
/// Writes one CSV per `rho` (and a per-step summary) when `out_dir` is set.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<Vec<SweepResult>> {
    cfg.validate()?;
    let index = ConsensusIndex::build(&cfg.scenario.topology);
    let tracks: Vec<Vec<ChannelSet>> = map_indexed(cfg.tracks, cfg.execution, |i| {
        generate_track(&cfg.scenario, &cfg.track, i as u64)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cfg.rhos.len());
    for &rho in &cfg.rhos {
        let admm = AdmmConfig { rho, ..cfg.admm };
        let results = map_indexed(cfg.tracks, cfg.execution, |i| {
            run_track(&tracks[i], &cfg.scenario, &index, &admm, i as u64)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let sweep = SweepResult { rho, tracks: results };
        if let Some(dir) = &cfg.out_dir {
            std::fs::create_dir_all(dir)?;
            write_track_csv(&dir.join(csv_name("rho", rho)), &sweep.tracks, cfg.scenario.topology.users())?;
            write_summary_csv(&dir.join(csv_name("summary_rho", rho)), &sweep.summary())?;
        }
        out.push(sweep);
    }
    Ok(out)
}

/// `rho_50.csv`, `rho_0.5.csv`, ...
pub fn csv_name(prefix: &str, rho: f64) -> String {
    format!("{prefix}_{rho}.csv")
}

fn header(users: usize) -> String {
    let mut h = String::from("track_id,step,rho,power_admm,power_opt");
    for k in 1..=users {
        write!(h, ",sinr_user_{k}").unwrap();
    }
    h.push_str(",sinr_mean,dist_W_sq,lyapunov,primal_residual,bound_appA");
    for k in 1..=users {
        write!(h, ",bound_eq20_user_{k}").unwrap();
    }
    h
}

/// One row per step; track and step numbers are 1-based. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_track_csv(path: &Path, tracks: &[TrackResult], users: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header(users))?;
    for t in tracks {
        for (i, s) in t.steps.iter().enumerate() {
            let mut row = format!("{},{},{:?},{:?},{:?}", t.track_id + 1, i + 1, t.rho, s.power_admm, s.power_opt);
            for v in &s.sinr {
                write!(row, ",{v:?}").unwrap();
            }
            write!(
                row,
                ",{:?},{:?},{:?},{:?},{:?}",
                s.sinr_mean, s.dist_w_sq, s.lyapunov, s.primal_residual, s.distance_bound
            )
            .unwrap();
            for v in &s.sinr_bound {
                write!(row, ",{v:?}").unwrap();
            }
            writeln!(out, "{row}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_track_csv`]. The dual-balance column is
/// not part of the schema and reads back as zero.
pub fn read_track_csv(path: &Path) -> Result<Vec<TrackResult>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let p = path.display().to_string();
    let err = |line: usize, msg: String| Error::Parse {
        path: p.clone(),
        line,
        msg,
    };
    let head = lines.next().ok_or_else(|| err(1, "missing header".into()))??;
    let cols = head.split(',').count();
    let users = cols
        .checked_sub(10)
        .filter(|u| u % 2 == 0)
        .map(|u| u / 2)
        .ok_or_else(|| err(1, format!("unexpected column count {cols}")))?;
    if head != header(users) {
        return Err(err(1, "header does not match the schema".into()));
    }
    let mut tracks: Vec<TrackResult> = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line?;
        let lineno = no + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols {
            return Err(err(lineno, format!("expected {cols} fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(lineno, format!("{s:?}: {e}")));
        let id: u64 = f[0].parse().map_err(|e| err(lineno, format!("track id: {e}")))?;
        let rho = num(f[2])?;
        let sinr = f[5..5 + users].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let o = 5 + users;
        let sinr_bound = f[o + 5..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let step = StepMetrics {
            power_admm: num(f[3])?,
            power_opt: num(f[4])?,
            sinr,
            sinr_mean: num(f[o])?,
            dist_w_sq: num(f[o + 1])?,
            lyapunov: num(f[o + 2])?,
            primal_residual: num(f[o + 3])?,
            distance_bound: num(f[o + 4])?,
            sinr_bound,
            dual_balance: 0.0,
        };
        match tracks.last_mut() {
            Some(t) if t.track_id + 1 == id => t.steps.push(step),
            _ => tracks.push(TrackResult {
                track_id: id.checked_sub(1).ok_or_else(|| err(lineno, "track ids start at 1".into()))?,
                rho,
                steps: vec![step],
            }),
        }
    }
    Ok(tracks)
}

pub fn write_summary_csv(path: &Path, summary: &[StepSummary]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,mean_power_admm,mean_power_opt,mean_sinr,std_sinr")?;
    for (i, s) in summary.iter().enumerate() {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            i + 1,
            s.mean_power_admm,
            s.mean_power_opt,
            s.mean_sinr,
            s.std_sinr
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinr_bound_values() {
        assert_eq!(eval_sinr_bound(0.0, 50.0, 10.0, 10.0), 10.0);
        assert!((eval_sinr_bound(1.0, 50.0, 10.0, 10.0) - 10.0 * (1.0 - 4.0 / 504.0)).abs() < 1e-12);
        assert!((eval_sinr_bound(1.0, 50.0, 10.0, 10.0) - 9.9206).abs() < 1e-4);
        let far = eval_sinr_bound(1e15, 50.0, 10.0, 10.0);
        assert!(far > 0.0 && far < 1e-11);
    }
}
