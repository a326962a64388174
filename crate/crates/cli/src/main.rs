//! `timing-game`: command line harness for calibration, simulation
//! campaigns, the noiseless timeline and closed-form values.

mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use timing_game::boundary::{calibrate_gamma, constrained_value_mc, unconstrained_value, CalibrationOptions, McSettings};
use timing_game::model::{in_closed_preemption, simultaneous_value, Dynamics};
use timing_game::{
    aggregate, attrition_rate, classify_region, det_outcome, det_timeline, follower_value, leader_value,
    preemption_intensity, run_campaign, simulate_game_traced, Boundary, CalibrationError, Constants, GameOptions,
    GameStreams, ModelError, Region, SimulationReport, Timeline,
};

use config::{BoundaryChoice, ConfigError, ExperimentConfig, Mode};

/// Largest hazard increment accumulated in one step.
const HAZARD_CAP: f64 = 50.0;

const BUNDLED: [(&str, &str); 3] = [
    ("paper_section5", include_str!("../../../configs/paper_section5.conf")),
    ("paper_section6_base", include_str!("../../../configs/paper_section6_base.conf")),
    ("paper_section6_growth", include_str!("../../../configs/paper_section6_growth.conf")),
];

#[derive(Parser)]
#[command(name = "timing-game", version, about = "Monte Carlo harness for a two-firm investment timing game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the boundary decay rate at the configured anchors.
    Calibrate(Common),
    /// Run an equilibrium simulation campaign.
    Simulate(Common),
    /// Analyse and play the noiseless game (both volatilities zero).
    Deterministic(Common),
    /// Closed-form payoffs and constrained leader value at the start state.
    Value(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (key = value or JSON), or the name of a bundled config.
    #[arg(long, value_name = "PATH")]
    config: String,
    /// Override the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the number of paths.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,
    /// Override the time step.
    #[arg(long, value_name = "F")]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Write per-path series for the first K paths (simulate only).
    #[arg(long, value_name = "K", default_value_t = 0)]
    dump_paths: usize,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

/// A failure reported as one `error[kind]: message` line.
#[derive(Debug)]
enum Failure {
    Config(String),
    Regime(String),
    Calibration(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Regime(_) => 3,
            Failure::Calibration(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Regime(m) => ("regime", m),
            Failure::Calibration(m) => ("calibration", m),
            Failure::Io(m) => ("io", m),
        };
        write!(f, "error[{kind}]: {}", msg.replace('\n', " "))
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidGrid(_) => Failure::Config(e.to_string()),
            _ => Failure::Regime(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(format!("{e:#}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    let (mode, common) = match command {
        Command::Calibrate(c) => (Mode::Calibrate, c),
        Command::Simulate(c) => (Mode::Stochastic, c),
        Command::Deterministic(c) => (Mode::Deterministic, c),
        Command::Value(c) => (Mode::Value, c),
    };
    let cfg = load_config(&common, mode)?;
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Failure::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    let out = &common.out;
    std::fs::create_dir_all(out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
    // the effective config, overrides applied, so any run can be repeated
    let conf = out.join("config.conf");
    std::fs::write(&conf, cfg.to_text()).map_err(|e| Failure::Io(format!("{}: {e}", conf.display())))?;
    match mode {
        Mode::Calibrate => calibrate(&cfg, out),
        Mode::Stochastic => simulate(&cfg, out, common.dump_paths),
        Mode::Deterministic => deterministic(&cfg, out),
        Mode::Value => value(&cfg, out),
    }?;
    eprintln!("{}: outputs in {}", mode.as_str(), out.display());
    Ok(())
}

fn load_config(common: &Common, mode: Mode) -> Result<ExperimentConfig, Failure> {
    let path = Path::new(&common.config);
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => match BUNDLED.iter().find(|(name, _)| *name == common.config) {
            Some((_, t)) => t.to_string(),
            None => return Err(Failure::Config(format!("{}: {e}", path.display()))),
        },
    };
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paths {
        cfg.n_paths = n;
    }
    if let Some(dt) = common.dt {
        cfg.dt = dt;
    }
    cfg.mode = mode;
    cfg.validate()?;
    Ok(cfg)
}

fn mc(cfg: &ExperimentConfig) -> McSettings<f64> {
    McSettings::new(cfg.n_paths, cfg.dt, cfg.horizon, cfg.seed)
}

fn constants(cfg: &ExperimentConfig) -> Result<Constants, Failure> {
    Ok(Constants::new(&cfg.params)?)
}

fn calibration_options(cfg: &ExperimentConfig) -> CalibrationOptions<f64> {
    CalibrationOptions::new(cfg.x_grid.clone(), mc(cfg))
}

fn resolve_boundary(cfg: &ExperimentConfig, k: &Constants) -> Result<Boundary, Failure> {
    match cfg.boundary {
        BoundaryChoice::Fixed { gamma } => Ok(Boundary::exponential(&cfg.params, k, gamma)?),
        BoundaryChoice::Auto => Ok(Boundary::degenerate(k)),
        BoundaryChoice::Calibrate => match calibrate_gamma(&calibration_options(cfg), &cfg.params, k) {
            Ok(r) => Ok(Boundary::exponential(&cfg.params, k, r.gamma)?),
            Err(e) => Err(calibration_failure(e)),
        },
    }
}

fn calibration_failure(e: CalibrationError) -> Failure {
    match e {
        CalibrationError::Model(m) => m.into(),
        CalibrationError::NotApplicable(m) => Failure::Regime(format!("exponential boundary not applicable: {m}")),
        other => Failure::Calibration(other.to_string()),
    }
}

fn calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let k = constants(cfg)?;
    let (report, failure) = match calibrate_gamma(&calibration_options(cfg), &cfg.params, &k) {
        Ok(r) => (r, None),
        Err(CalibrationError::Infeasible(r)) => {
            let msg = format!(
                "best gamma {} leaves anchor residuals outside 2 stderr; report written to {}",
                r.gamma,
                out.join("report.json").display()
            );
            (*r, Some(Failure::Calibration(msg)))
        }
        Err(e) => return Err(calibration_failure(e)),
    };
    let b = Boundary::exponential(&cfg.params, &k, report.gamma)?;
    output::write_json(&out.join("report.json"), &Report { command: "calibrate", config: cfg, body: &report })?;
    output::write_boundary(out, cfg, &k, &b)?;
    println!("gamma = {:.6}  objective = {:.3}  feasible = {}", report.gamma, report.objective, failure.is_none());
    failure.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct Report<'a, B: Serialize> {
    command: &'static str,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: &'a B,
}

#[derive(Serialize)]
struct SimulateBody<'a> {
    boundary: &'a Boundary,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

fn simulate(cfg: &ExperimentConfig, out: &Path, dump_paths: usize) -> Result<(), Failure> {
    let k = constants(cfg)?;
    let b = resolve_boundary(cfg, &k)?;
    let outcomes = run_campaign(cfg.s0, &b, &cfg.params, &k, &mc(cfg), HAZARD_CAP)?;
    let report = aggregate(&outcomes, &cfg.params, cfg.s0)?;
    output::write_json(
        &out.join("report.json"),
        &Report { command: "simulate", config: cfg, body: &SimulateBody { boundary: &b, report: &report } },
    )?;
    output::write_scatter(&out.join("scatter.csv"), &report.scatter)?;
    output::write_boundary(out, cfg, &k, &b)?;
    if dump_paths > 0 {
        let dir = out.join("paths");
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        let opts = GameOptions { dt: cfg.dt, horizon: cfg.horizon, hazard_cap: HAZARD_CAP };
        for i in 0..dump_paths.min(cfg.n_paths) {
            let streams = GameStreams::for_path(cfg.seed, i as u64);
            let (_, trace) = simulate_game_traced(cfg.s0, &b, &cfg.params, &k, &opts, &streams)?;
            output::write_trace(&dir.join(format!("{i:03}.csv")), &trace)?;
        }
    }
    println!(
        "preemption {:.4}  attrition {:.4}  no stop {:.4}  value {:.4} ± {:.4}",
        report.share_preemption,
        report.share_attrition,
        report.share_nostop,
        report.mean_equilibrium_value,
        report.equilibrium_value_stderr
    );
    Ok(())
}

#[derive(Serialize)]
struct DeterministicBody<'a> {
    #[serde(flatten)]
    timeline: &'a Timeline,
    outcomes: &'a SimulationReport,
}

fn deterministic(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    cfg.params
        .validate(Dynamics::Deterministic)
        .map_err(ModelError::InvalidParams)?;
    let k = constants(cfg)?;
    let timeline = det_timeline(cfg.s0, &cfg.params, &k, cfg.dt, cfg.horizon)?;
    let opts = GameOptions::new(cfg.dt, cfg.horizon);
    let outcomes = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| det_outcome(cfg.s0, &cfg.params, &k, &opts, &GameStreams::for_path(cfg.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    let report = aggregate(&outcomes, &cfg.params, cfg.s0)?;
    output::write_json(
        &out.join("report.json"),
        &Report { command: "deterministic", config: cfg, body: &DeterministicBody { timeline: &timeline, outcomes: &report } },
    )?;
    output::write_timeline(&out.join("timeline.csv"), &timeline)?;
    output::write_scatter(&out.join("scatter.csv"), &report.scatter)?;
    output::write_boundary(out, cfg, &k, &Boundary::degenerate(&k))?;
    println!(
        "t_bar {}  t_P {}  attrition {}  attrition stops {:.4}  preemption {:.4}",
        timeline.t_bar, timeline.t_p, timeline.attrition_occurs, report.share_attrition, report.share_preemption
    );
    Ok(())
}

#[derive(Serialize)]
struct ValueBody {
    constants: Constants,
    region: Region,
    leader: f64,
    follower: f64,
    simultaneous: f64,
    unconstrained_leader: f64,
    /// `None` in the preemption region.
    attrition_rate: Option<f64>,
    preemption_intensity: f64,
    boundary: Boundary,
    /// Monte Carlo value of the constrained leader problem; `None` when the
    /// start lies in the preemption region.
    constrained_leader: Option<f64>,
    constrained_leader_stderr: Option<f64>,
}

fn value(cfg: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let k = constants(cfg)?;
    let b = resolve_boundary(cfg, &k)?;
    let (p, s) = (&cfg.params, cfg.s0);
    let in_p = in_closed_preemption(s.x, s.y, &k);
    let constrained = if in_p { None } else { Some(constrained_value_mc(s, &b, &mc(cfg), p, &k)?) };
    let body = ValueBody {
        constants: k,
        region: classify_region(s.x, s.y, &k, &b),
        leader: leader_value(0.0, s.y, p),
        follower: follower_value(0.0, s.x, p),
        simultaneous: simultaneous_value(0.0, p),
        unconstrained_leader: unconstrained_value(s.y, p, &k),
        attrition_rate: if in_p { None } else { Some(attrition_rate(s.x, s.y, p, &k, &b)?) },
        preemption_intensity: preemption_intensity(s.x, s.y, p)?,
        boundary: b,
        constrained_leader: constrained.map(|e| e.value),
        constrained_leader_stderr: constrained.map(|e| e.stderr),
    };
    output::write_json(&out.join("report.json"), &Report { command: "value", config: cfg, body: &body })?;
    output::write_boundary(out, cfg, &k, &b)?;
    println!(
        "L = {:.4}  F = {:.4}  M = {:.4}  unconstrained = {:.4}  region = {}",
        body.leader,
        body.follower,
        body.simultaneous,
        body.unconstrained_leader,
        body.region.as_str()
    );
    Ok(())
}
