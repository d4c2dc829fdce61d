//! `beamtrack`: solve single instances, simulate channel tracks and run the
//! verification suite.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible instance,
//! 3 verification failure.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use beamtrack::acceptance::{run_acceptance, AcceptanceConfig, Fault};
use beamtrack::admm::AdmmConfig;
use beamtrack::duality::{solve_uplink_fixed_point, DualOptions, Outcome};
use beamtrack::exec::Execution;
use beamtrack::harness::{run_ensemble, ExperimentConfig, SweepResult};
use beamtrack::instance::read_instance;
use beamtrack::model::{compute_all_sinr, ChannelSet, Scenario};
use beamtrack::socp::{build_centralized, solve, SolveStatus, SolverOptions};
use beamtrack::tracks::{sample_initial, TrackConfig};
use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(name = "beamtrack", version, about = "Distributed dynamic downlink beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance centrally and with the duality oracle.
    Solve(SolveArgs),
    /// Simulate a single channel track.
    Track(RunArgs),
    /// Simulate an ensemble of channel tracks.
    Ensemble(RunArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Flat key = value file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for track-level parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Base stations.
    #[arg(long)]
    nb: Option<usize>,
    /// Antennas per base station.
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    users_per_bs: Option<usize>,
    /// SINR target (linear).
    #[arg(long)]
    gamma: Option<f64>,
    /// Noise variance.
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file.
    #[arg(conflicts_with = "random")]
    instance: Option<PathBuf>,
    /// Draw a Gaussian channel from this seed instead.
    #[arg(long)]
    random: Option<u64>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    /// ADMM penalty; repeat for a sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    rho: Vec<f64>,
    /// Innovation weight of the AR(1) channel model.
    #[arg(long, allow_negative_numbers = true)]
    zeta: Option<f64>,
    /// Channels per track.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Tracks in the tracking ensemble.
    #[arg(long)]
    tracks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Deliberate defect to check that verification catches it:
    /// none or skewed-averaging.
    #[arg(long, value_name = "FAULT")]
    inject_fault: Option<String>,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Usage(String),
    Infeasible(String),
    Verification(String),
    Runtime(String),
}

impl From<beamtrack::Error> for Failure {
    fn from(e: beamtrack::Error) -> Self {
        use beamtrack::Error as E;
        match e {
            E::RejectionLimit(_) => Failure::Infeasible(e.to_string()),
            E::Dimension(_)
            | E::Topology(_)
            | E::InvalidParameter(_)
            | E::NonFinite(_)
            | E::ZeroChannel { .. }
            | E::Parse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

impl ScenarioArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            nb: self.nb,
            nt: self.nt,
            users_per_bs: self.users_per_bs,
            gamma: self.gamma,
            sigma2: self.sigma2,
            ..Overrides::default()
        }
    }
}

impl Common {
    fn merge(&self, flags: Overrides) -> Result<Overrides, Failure> {
        let flags = Overrides {
            jobs: self.jobs,
            ..flags
        };
        let file = match &self.config {
            Some(p) => Overrides::read(p).map_err(Failure::Usage)?,
            None => Overrides::default(),
        };
        Ok(flags.over(file))
    }
}

/// Effective settings with defaults filled in.
fn fill_scenario(o: &mut Overrides) -> Result<Scenario, Failure> {
    let nb = *o.nb.get_or_insert(2);
    let nt = *o.nt.get_or_insert(4);
    let upb = *o.users_per_bs.get_or_insert(2);
    let gamma = *o.gamma.get_or_insert(10.0);
    let sigma2 = *o.sigma2.get_or_insert(10.0);
    Ok(Scenario::uniform(nb, upb, nt, gamma, sigma2)?)
}

fn execution(jobs: &mut Option<usize>) -> Result<Execution, Failure> {
    match *jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        None => {
            *jobs = std::thread::available_parallelism().map(|n| n.get()).ok();
            Ok(Execution::Parallel)
        }
    }
}

fn cmd_solve(args: SolveArgs) -> CmdResult {
    let flags = Overrides {
        instance: args.instance.clone(),
        random: args.random,
        ..args.scenario.overrides()
    };
    let from_flags = flags.instance.is_some() || flags.random.is_some();
    let mut o = args.common.merge(flags)?;
    if from_flags {
        // an instance source given on the command line replaces the file's
        if args.instance.is_some() {
            o.random = None;
        } else {
            o.instance = None;
        }
    }
    let (scenario, h, label) = match (&o.instance, o.random) {
        (Some(path), None) => {
            let inst = read_instance(path)?;
            let [h] = <[ChannelSet; 1]>::try_from(inst.channels).map_err(|c| {
                Failure::Usage(format!("{}: expected one channel section, found {}", path.display(), c.len()))
            })?;
            (inst.scenario, h, path.display().to_string())
        }
        (None, Some(seed)) => {
            let scenario = fill_scenario(&mut o)?;
            let h = sample_initial(&scenario.topology, seed);
            (scenario, h, format!("random seed {seed}"))
        }
        (Some(_), Some(_)) => return Err(Failure::Usage("give an instance file or --random, not both".into())),
        (None, None) => return Err(Failure::Usage("give an instance file or --random SEED".into())),
    };
    let topo = &scenario.topology;
    println!(
        "instance: {label} ({} base stations, {} users, {} antennas)",
        topo.base_stations(),
        topo.users(),
        topo.antennas()
    );

    let (prog, map) = build_centralized(&h, &scenario)?;
    let report = solve(&prog, &SolverOptions::default())?;
    let dual = solve_uplink_fixed_point(&h, &scenario, &DualOptions::default())?;
    match (report.status, dual) {
        (SolveStatus::Optimal, Outcome::Feasible(d)) => {
            let w = map.beamformers(&report.x);
            let sinr_socp = compute_all_sinr(&w, &h, &scenario)?;
            let sinr_dual = compute_all_sinr(&d.w_star, &h, &scenario)?;
            println!("user  bs  power_socp      power_dual      sinr_socp   sinr_dual");
            for k in 0..topo.users() {
                println!(
                    "{:<5} {:<3} {:<15.6} {:<15.6} {:<11.6} {:.6}",
                    k + 1,
                    topo.serving(k) + 1,
                    w.power(k),
                    d.powers[k],
                    sinr_socp[k],
                    sinr_dual[k]
                );
            }
            let (ps, pd) = (w.total_power(), d.total_power());
            println!("total power: socp {ps:.6}, duality {pd:.6}");
            println!(
                "discrepancy: power {:.3e} (relative {:.3e}), beamformers {:.3e}",
                (ps - pd).abs(),
                (ps - pd).abs() / pd,
                w.distance_sq(&d.w_star).sqrt()
            );
            Ok(())
        }
        (status, dual) if status == SolveStatus::Infeasible || !dual.is_feasible() => {
            let socp = if status == SolveStatus::Infeasible {
                let aty = (prog.a.transpose() * &report.y).norm();
                let valid = beamtrack::acceptance::is_infeasibility_certificate(&prog, &report.y, 1e-6);
                format!(
                    "infeasible (certificate b'y = {:.6}, |A'y| = {aty:.1e}, {})",
                    prog.b.dot(&report.y),
                    if valid { "verified" } else { "not verified" }
                )
            } else {
                format!("{status:?}")
            };
            let oracle = if dual.is_feasible() {
                "feasible"
            } else {
                "infeasible (uplink fixed point diverges)"
            };
            println!("conic solver: {socp}");
            println!("duality oracle: {oracle}");
            Err(Failure::Infeasible("SINR targets cannot be met".into()))
        }
        (status, _) => Err(Failure::Runtime(format!("conic solver stopped with status {status:?}"))),
    }
}

fn cmd_run(args: RunArgs, single: bool) -> CmdResult {
    let flags = Overrides {
        rho: (!args.rho.is_empty()).then(|| args.rho.clone()),
        zeta: args.zeta,
        steps: args.steps,
        tracks: args.tracks,
        seed: args.seed,
        out: args.out.clone(),
        ..args.scenario.overrides()
    };
    let mut o = args.common.merge(flags)?;
    // keys that belong to other commands
    o.random = None;
    o.instance = None;
    o.inject_fault = None;
    let scenario = fill_scenario(&mut o)?;
    let rhos = o.rho.get_or_insert_with(|| vec![1.0, 50.0, 1000.0]).clone();
    let zeta = *o.zeta.get_or_insert(0.01);
    let steps = *o.steps.get_or_insert(50);
    let tracks = *o.tracks.get_or_insert(if single { 1 } else { 200 });
    let seed = *o.seed.get_or_insert(1);
    let out = o.out.get_or_insert_with(|| PathBuf::from("results")).clone();
    if single && tracks != 1 {
        return Err(Failure::Usage("track simulates one track; use ensemble for more".into()));
    }
    let execution = execution(&mut o.jobs)?;
    let cfg = ExperimentConfig {
        scenario,
        track: TrackConfig {
            zeta,
            length: steps,
            seed,
            ..TrackConfig::default()
        },
        rhos,
        tracks,
        admm: AdmmConfig {
            execution,
            ..AdmmConfig::default()
        },
        execution,
        out_dir: Some(out.clone()),
    };
    cfg.validate()?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("config.txt"), o.format())
        .map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;

    let sweeps = run_ensemble(&cfg)?;
    for sweep in &sweeps {
        print_summary(sweep, steps);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn print_summary(sweep: &SweepResult, steps: usize) {
    let start = steps - (steps * 2 / 5).max(1);
    let stats = sweep.window_stats(start..steps);
    let user_steps: usize = sweep.tracks.iter().flat_map(|t| &t.steps).map(|s| s.sinr.len()).sum();
    println!(
        "rho {}: {} track(s) x {steps} steps; steps {}-{steps}: power {:.4} vs optimum {:.4} (gap {:.2}%), mean SINR {:.4}, min SINR {:.4}",
        sweep.rho,
        sweep.tracks.len(),
        start + 1,
        stats.mean_power_admm,
        stats.mean_power_opt,
        100.0 * stats.relative_power_gap(),
        stats.mean_sinr,
        stats.min_sinr
    );
    println!(
        "  bound violations over all steps: distance bound {}, SINR bound {} of {user_steps} user-steps",
        stats.distance_bound_violations, stats.sinr_bound_violations_total
    );
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let flags = Overrides {
        tracks: args.tracks,
        seed: args.seed,
        inject_fault: args.inject_fault.clone(),
        ..Overrides::default()
    };
    let mut o = args.common.merge(flags)?;
    let fault: Fault = o.inject_fault.as_deref().unwrap_or("none").parse()?;
    let tracks = o.tracks.unwrap_or(200);
    if tracks == 0 {
        return Err(Failure::Usage("--tracks must be at least 1".into()));
    }
    let cfg = AcceptanceConfig {
        tracks,
        seed: o.seed.unwrap_or(1),
        execution: execution(&mut o.jobs)?,
        fault,
    };
    let results = run_acceptance(&cfg, |c| println!("{c}"));
    let failed: Vec<_> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    println!("{}/{} checks passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Track(a) => cmd_run(a, true),
        Command::Ensemble(a) => cmd_run(a, false),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (1, m),
                Failure::Infeasible(m) => (2, m),
                Failure::Verification(m) => (3, m),
                Failure::Runtime(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
