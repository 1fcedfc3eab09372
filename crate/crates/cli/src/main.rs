use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use passivity_lab::analysis::{
    self, level_curve_points, DoaEstimate, InputPrior, RegionDescriptor,
};
use passivity_lab::sim::{simulate, simulate_closed_loop};
use passivity_lab::study::{self, RunStatus};
use passivity_lab::{
    certify_feedback, identify, Controller, Dictionary, Error, Identification, IdentifyResult, InputSignal,
    RunConfig, SimConfig, StorageEstimate, Trajectory, Verdict,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(name = "passivity-lab", version, about = "Identify storage functions and passivity margins from trajectory data")]
struct Cli {
    /// TOML run configuration; missing keys take the reference values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run with the reference pendulum experiment and no configuration file.
    #[arg(long, global = true)]
    paper_defaults: bool,
    /// Main output file.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured pendulum and write the trajectory CSV.
    Simulate,
    /// Identify a storage function and margin; writes the result JSON.
    Identify {
        /// Use this trajectory instead of simulating one.
        #[arg(long, value_name = "FILE")]
        trajectory: Option<PathBuf>,
    },
    /// Identify at every configured window size; writes `T,status,margin`.
    Sweep {
        #[arg(long, value_name = "FILE")]
        trajectory: Option<PathBuf>,
        /// Comma-separated window sizes overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<usize>>,
    },
    /// Repeat the noisy identification with independent seeds; writes a summary JSON.
    Montecarlo,
    /// Estimate the domain of attraction from an identified storage function.
    Doa {
        #[arg(long, value_name = "FILE")]
        result: PathBuf,
        /// Data defining the negative region; the noise-free simulation by default.
        #[arg(long, value_name = "FILE")]
        trajectory: Option<PathBuf>,
        /// Level-curve CSV `c,x1,x2`.
        #[arg(long, value_name = "FILE")]
        levels: Option<PathBuf>,
        /// L_fS series CSV `t,lfs`.
        #[arg(long, value_name = "FILE")]
        lfs: Option<PathBuf>,
        /// Assume L_fS < 0 on the whole state space.
        #[arg(long)]
        whole_space: bool,
    },
    /// Compare open-loop decay of S with damping control for each configured gain.
    Damping {
        #[arg(long, value_name = "FILE")]
        result: PathBuf,
    },
    /// Feedback-stability verdict for an OFP(rho) system with an IFP(nu) system.
    Certify {
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        /// Take rho from an identification result.
        #[arg(long, value_name = "FILE")]
        result: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Io(_) | Error::Json(_) => {
                EXIT_CONFIG
            }
            Error::DegenerateEstimate(_) | Error::DegenerateRegion(_) | Error::MissingPrior(_) => EXIT_DEGENERATE,
            Error::SimulationDiverged { .. } | Error::Solver(_) => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    match (&cli.config, cli.paper_defaults) {
        (Some(path), _) => Ok(RunConfig::load(path)?),
        (None, true) => Ok(RunConfig::default()),
        (None, false) => Err(Failure {
            code: EXIT_CONFIG,
            message: "no configuration given; pass --config FILE or --paper-defaults".into(),
        }),
    }
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn trajectory(cfg: &RunConfig, file: Option<&Path>, noisy: bool) -> Result<Trajectory, Failure> {
    Ok(match file {
        Some(p) => Trajectory::load_csv(p)?,
        None if noisy => cfg.measured_trajectory()?,
        None => cfg.clean_trajectory()?,
    })
}

fn load_result(path: &Path) -> Result<IdentifyResult, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Ok(IdentifyResult::from_json(&text)?)
}

fn run(cli: Cli) -> CmdResult {
    if let Command::Certify { rho, nu, result } = &cli.command {
        return cmd_certify(*rho, *nu, result.as_deref());
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cli, &cfg),
        Command::Identify { trajectory } => cmd_identify(&cli, &cfg, trajectory.as_deref()),
        Command::Sweep { trajectory, windows } => cmd_sweep(&cli, &cfg, trajectory.as_deref(), windows.as_deref()),
        Command::Montecarlo => cmd_montecarlo(&cli, &cfg),
        Command::Doa { result, trajectory, levels, lfs, whole_space } => {
            cmd_doa(&cli, &cfg, result, trajectory.as_deref(), levels.as_deref(), lfs.as_deref(), *whole_space)
        }
        Command::Damping { result } => cmd_damping(&cli, &cfg, result),
        Command::Certify { .. } => unreachable!("handled above"),
    }
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig) -> CmdResult {
    let traj = cfg.measured_trajectory()?;
    let path = out_path(cli, "trajectory.csv");
    traj.save_csv(&path)?;
    println!("wrote {} samples to {}", traj.len(), path.display());
    Ok(0)
}

fn cmd_identify(cli: &Cli, cfg: &RunConfig, file: Option<&Path>) -> CmdResult {
    let traj = trajectory(cfg, file, true)?;
    let dict = Dictionary::pendulum();
    let opts = cfg.identify_options();
    let id = identify(&traj, &dict, &opts)?;
    let res = IdentifyResult::from_identification(&id, &dict, &opts, cfg.identification.prune_threshold)?;
    let path = out_path(cli, "result.json");
    write(&path, &res.to_json())?;
    match &id {
        Identification::Estimate(est) => {
            let pruned = res.to_estimate()?;
            println!("optimal: margin = {:.6} ({:?}, T = {})", est.margin, est.supply_kind, opts.window);
            println!("S(x) = {}", pruned.formula());
            println!("wrote {}", path.display());
            Ok(0)
        }
        Identification::Infeasible(rep) => {
            println!("infeasible: {}", rep.summary());
            println!("wrote {}", path.display());
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_sweep(cli: &Cli, cfg: &RunConfig, file: Option<&Path>, windows: Option<&[usize]>) -> CmdResult {
    let windows = windows.unwrap_or(&cfg.identification.sweep_windows);
    if windows.is_empty() || windows.contains(&0) {
        return Err(Failure { code: EXIT_CONFIG, message: "window list must be nonempty and positive".into() });
    }
    let traj = trajectory(cfg, file, true)?;
    let rows = study::feasibility_sweep(&traj, &Dictionary::pendulum(), &cfg.identify_options(), windows)?;
    let path = out_path(cli, "sweep.csv");
    write(&path, &study::sweep_csv(&rows))?;
    match study::transition_window(&rows) {
        Some(t) => println!("feasible from T = {t}"),
        None => println!("no feasible tail in the swept windows"),
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_montecarlo(cli: &Cli, cfg: &RunConfig) -> CmdResult {
    let clean = cfg.clean_trajectory()?;
    let summary = study::monte_carlo(&clean, &Dictionary::pendulum(), &cfg.monte_carlo_options(), &cfg.monte_carlo_plan())?;
    let path = out_path(cli, "montecarlo.json");
    write(&path, &serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    println!("{} of {} runs feasible", summary.feasible_runs, summary.runs);
    if let (Some(lo), Some(hi), Some(mean)) = (summary.margin_min, summary.margin_max, summary.margin_mean) {
        println!("margin min {lo:.6} max {hi:.6} mean {mean:.6}");
    }
    for (term, count) in &summary.kept_frequency {
        println!("  {term}: kept in {count}");
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn check_positive_on_data(est: &StorageEstimate, traj: &Trajectory) -> Result<(), Failure> {
    for x in traj.states() {
        if x.iter().any(|v| *v != 0.0) && !(est.eval_storage(x, true) > 0.0) {
            return Err(Error::DegenerateEstimate(format!("storage is not positive at sample {x:?}")).into());
        }
    }
    Ok(())
}

fn cmd_doa(
    cli: &Cli,
    cfg: &RunConfig,
    result: &Path,
    file: Option<&Path>,
    levels: Option<&Path>,
    lfs_out: Option<&Path>,
    whole_space: bool,
) -> CmdResult {
    let est = load_result(result)?.to_estimate()?;
    let traj = trajectory(cfg, file, false)?;
    check_positive_on_data(&est, &traj)?;
    let lfs = analysis::estimate_lfs(&est, &traj, Some(InputPrior::Constant(&cfg.analysis.b)))?;
    if let Some(p) = lfs_out {
        lfs.save_csv(p)?;
    }
    let mut ropts = cfg.region_options();
    ropts.whole_space_prior |= whole_space;
    let region = analysis::negative_region(&lfs, &traj, &ropts)?;
    let extent = [0, 1].map(|i| traj.states().fold(0.0_f64, |m, x| m.max(x[i].abs())));
    let doa: DoaEstimate = analysis::doa_estimate(&est, &region, &cfg.doa_options(Some(extent)))?;

    let path = out_path(cli, "doa.json");
    let report = doa.report(result.display().to_string());
    write(&path, &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;

    let levels_path = levels.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension("levels.csv"));
    let mut csv = String::from("c,x1,x2\n");
    let mut cs = vec![doa.level];
    cs.extend(cfg.analysis.level_values.iter().copied());
    for c in cs {
        for p in level_curve_points(&est, c, &doa.search_box, cfg.analysis.grid_resolution, true) {
            let _ = writeln!(csv, "{c},{},{}", p[0], p[1]);
        }
    }
    write(&levels_path, &csv)?;

    let kind = match &region {
        RegionDescriptor::ConvexHull { .. } => "convex hull of the data",
        RegionDescriptor::Box { .. } => "bounding box of the data",
        RegionDescriptor::WholeSpace => "whole space (prior)",
    };
    println!("region: {kind}; max L_fS estimate {:.4e}", lfs.max());
    println!("c = {:.4}; boundary samples inside region: {:.3}", doa.level, doa.boundary_samples_inside);
    println!("wrote {} and {}", path.display(), levels_path.display());
    Ok(0)
}

fn first_below(s: &[f64], level: f64) -> Option<usize> {
    s.iter().position(|&v| v <= level)
}

fn cmd_damping(cli: &Cli, cfg: &RunConfig, result: &Path) -> CmdResult {
    let est = load_result(result)?.to_estimate()?;
    let plant = cfg.pendulum()?;
    let sim = SimConfig {
        duration: cfg.analysis.damping_duration,
        max_samples: None,
        ..cfg.sim_config()
    };
    let x0 = &cfg.analysis.damping_x0;
    let storage = |t: &Trajectory| -> Vec<f64> { t.states().map(|x| est.eval_storage(x, true)).collect() };
    let open_traj = simulate(&plant, x0, &InputSignal::Zero, &sim)?;
    let open = storage(&open_traj);
    let mut closed = Vec::new();
    for &k in &cfg.analysis.gains {
        let ctrl = if k > 0.0 {
            analysis::damping_control(&est, &cfg.analysis.b, k)?
        } else {
            Controller::new(est.clone(), cfg.analysis.b.clone(), 0.0)?
        };
        closed.push(storage(&simulate_closed_loop(&plant, &ctrl, x0, &sim)?));
    }

    let mut csv = String::from("t,S_open");
    for k in &cfg.analysis.gains {
        let _ = write!(csv, ",S_closed_k{k}");
    }
    csv.push('\n');
    for (i, t) in open_traj.times().iter().enumerate() {
        let _ = write!(csv, "{t},{}", open[i]);
        for c in &closed {
            let _ = write!(csv, ",{}", c[i]);
        }
        csv.push('\n');
    }
    let path = out_path(cli, "damping.csv");
    write(&path, &csv)?;

    let level = 0.01 * open[0];
    let show = |i: Option<usize>| i.map_or_else(|| "not reached".to_string(), |i| format!("sample {i}"));
    println!("S(x0) = {:.6}; 1% level reached by the open loop at {}", open[0], show(first_below(&open, level)));
    for (k, c) in cfg.analysis.gains.iter().zip(&closed) {
        println!("  k = {k}: {}", show(first_below(c, level)));
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_certify(rho: Option<f64>, nu: f64, result: Option<&Path>) -> CmdResult {
    let rho = match (rho, result) {
        (Some(r), _) => r,
        (None, Some(p)) => {
            let res = load_result(p)?;
            match (res.status, res.margin) {
                (RunStatus::Optimal, Some(m)) => m,
                _ => return Err(Error::DegenerateEstimate("the result holds no margin".into()).into()),
            }
        }
        (None, None) => return Err(Failure { code: EXIT_CONFIG, message: "pass --rho or --result".into() }),
    };
    match certify_feedback(rho, nu) {
        Verdict::Certified => println!("certified: nu = {nu} > -rho = {}", -rho),
        Verdict::NotCertified => println!("not_certified: nu = {nu} <= -rho = {}", -rho),
    }
    Ok(0)
}
