//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input or configuration, 3 simulation
//! rejected the scenario, 4 real and simulated data do not align, 5 model
//! fitting failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sharedspace_core::engine::{run_scenario, SimulationConfig, WorldState};
use sharedspace_core::{Action, Error as CoreError, ParameterSet, Regime};

use crate::calibration::{calibrate, write_elimination_log, write_history, write_model_table, CalibrationConfig, CalibrationData, Observations, Target};
use crate::dataset::{load_annotations, load_trajectories};
use crate::error::IoError;
use crate::evaluate::{compare_decisions, compare_trajectories, kinds_of, load_sim_decisions, summarize, MetricReport};
use crate::formats::{load_params, load_scenario, load_scene, regime_name, to_toml, write_decisions, write_text, write_trace_trajectories, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_ALIGNMENT: i32 = 4;
pub const EXIT_FIT: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "sharedspace", version, about = "Mixed-traffic shared-space simulation, evaluation and calibration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Hbs,
    Dut,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Hbs => Regime::Hbs,
            RegimeArg::Dut => Regime::Dut,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trajectories, decisions and manifest.
    Simulate(SimulateArgs),
    /// Compare real and simulated trajectories and decisions.
    Evaluate(EvaluateArgs),
    /// Calibrate the force and safety parameters against trajectories.
    CalibrateSfm(CalibrateArgs),
    /// Calibrate the payoff weights against annotated decisions.
    CalibrateGame(CalibrateArgs),
    /// Backward feature elimination on decision observations.
    SelectFeatures(SelectArgs),
    /// Check that a scene, scenario and parameter file load and plan.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene TOML file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Parameter TOML file; defaults apply when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Norm regime, unless the parameter file sets one.
    #[arg(long, value_enum, default_value = "hbs")]
    pub regime: RegimeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step length in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub dt: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_steps: u64,
    /// Scenario id written to the outputs; defaults to the scenario file stem.
    #[arg(long)]
    pub scenario_id: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Observed trajectory CSV.
    #[arg(long)]
    pub real: PathBuf,
    /// Simulated trajectory CSV.
    #[arg(long)]
    pub sim: PathBuf,
    /// Annotated decisions CSV; enables the decision section.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Simulated decisions CSV; defaults to decisions.csv beside --sim.
    #[arg(long)]
    pub sim_decisions: Option<PathBuf>,
    /// Seconds between frames.
    #[arg(long, default_value_t = 0.5)]
    pub frame_seconds: f64,
    /// Scale applied to both trajectory files.
    #[arg(long, default_value_t = 1.0)]
    pub meters_per_unit: f64,
    #[arg(long, alias = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Calibration run TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed, unless the run file sets one.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Norm regime, unless the parameter file sets one.
    #[arg(long, value_enum, default_value = "hbs")]
    pub regime: RegimeArg,
    /// Concurrent chromosome evaluations.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// CSV with an `action` column and one numeric column per feature.
    #[arg(long)]
    pub observations: PathBuf,
    /// Significance level.
    #[arg(long, default_value_t = 0.09)]
    pub alpha: f64,
    /// Feature never eliminated; repeatable.
    #[arg(long)]
    pub keep: Vec<String>,
    #[arg(long, default_value = "continue")]
    pub baseline: Action,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: IoError,
}

fn config(error: IoError) -> Failure {
    let code = match &error {
        IoError::Model(CoreError::Alignment(_)) => EXIT_ALIGNMENT,
        IoError::Model(CoreError::NonConvergence(_) | CoreError::RankDeficient | CoreError::NoContrast) => EXIT_FIT,
        _ => EXIT_CONFIG,
    };
    Failure { code, error }
}

fn simulation(error: IoError) -> Failure {
    match error {
        IoError::Model(_) => Failure { code: EXIT_SIMULATION, error },
        other => config(other),
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

pub fn execute(command: Command) -> Outcome {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::CalibrateSfm(a) => calibrate_cmd(Target::Sfm, a),
        Command::CalibrateGame(a) => calibrate_cmd(Target::Game, a),
        Command::SelectFeatures(a) => select_features(a),
        Command::Validate(a) => validate(a),
    }
}

fn out_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| config(IoError::io(dir, e)))
}

fn resolve_params(path: Option<&Path>, flag: RegimeArg) -> Result<ParameterSet, IoError> {
    let (mut p, explicit) = match path {
        Some(p) => load_params(p)?,
        None => (ParameterSet::default(), false),
    };
    if !explicit {
        p.regime = flag.into();
    }
    Ok(p)
}

fn finish(mut manifest: Manifest, dir: &Path, outputs: Vec<String>) -> Outcome {
    manifest.outputs = outputs;
    manifest.write(&dir.join("manifest.json")).map_err(config)
}

fn simulate(a: SimulateArgs) -> Outcome {
    let scene = load_scene(&a.scene).map_err(config)?;
    let scenario = load_scenario(&a.scenario).map_err(config)?;
    let params = resolve_params(a.params.as_deref(), a.regime).map_err(config)?;
    let cfg = SimulationConfig { dt: a.dt, max_steps: a.max_steps, seed: a.seed, params, ..SimulationConfig::default() };
    cfg.validate().map_err(|e| config(e.into()))?;
    let trace = run_scenario(&scene, &scenario, &cfg).map_err(|e| simulation(e.into()))?;

    out_dir(&a.out_dir)?;
    let sid = a
        .scenario_id
        .clone()
        .unwrap_or_else(|| a.scenario.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned()));
    let names = |id: sharedspace_core::AgentId| id.0.to_string();
    write_trace_trajectories(&a.out_dir.join("trajectory.csv"), &sid, &trace, 0, scene.meters_per_unit, &names).map_err(config)?;
    write_decisions(&a.out_dir.join("decisions.csv"), &sid, &trace, &names).map_err(config)?;

    let mut inputs = vec![a.scene.clone(), a.scenario.clone()];
    inputs.extend(a.params.clone());
    let settings = json!({ "scenario_id": sid, "regime": regime_name(cfg.params.regime), "config": cfg });
    let manifest = Manifest::new("simulate", a.seed, settings, &inputs).map_err(config)?;
    let arrived = trace.arrived.values().filter(|&&v| v).count();
    println!(
        "{} steps, {} of {} agents arrived, {} games",
        trace.step_count(),
        arrived,
        trace.arrived.len(),
        trace.games.len()
    );
    finish(manifest, &a.out_dir, vec!["trajectory.csv".into(), "decisions.csv".into()])
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    if !(a.frame_seconds > 0.0) {
        return Err(config(IoError::Config("--frame-seconds must be positive".into())));
    }
    let real = load_trajectories(&a.real, a.meters_per_unit).map_err(config)?;
    let sim = load_trajectories(&a.sim, a.meters_per_unit).map_err(config)?;
    let agents = compare_trajectories(&real, &sim, a.frame_seconds).map_err(config)?;
    let mut inputs = vec![a.real.clone(), a.sim.clone()];
    let decisions = match &a.annotations {
        Some(ann) => {
            let sim_dec_path = a
                .sim_decisions
                .clone()
                .unwrap_or_else(|| a.sim.parent().unwrap_or(Path::new(".")).join("decisions.csv"));
            let annotations = load_annotations(ann).map_err(config)?;
            let simulated = load_sim_decisions(&sim_dec_path).map_err(config)?;
            inputs.push(ann.clone());
            inputs.push(sim_dec_path);
            Some(compare_decisions(&annotations, &simulated, &kinds_of(&real)).map_err(config)?)
        }
        None => None,
    };
    let report = MetricReport { summary: summarize(&agents), agents, decisions };
    let written = report.write(&a.out_dir).map_err(config)?;
    print!("{}", report.summary_text());
    let settings = json!({ "frame_seconds": a.frame_seconds, "meters_per_unit": a.meters_per_unit });
    let manifest = Manifest::new("evaluate", 0, settings, &inputs).map_err(config)?;
    finish(manifest, &a.out_dir, written)
}

#[derive(Serialize)]
struct CalibrationSettings<'a> {
    target: &'static str,
    regime: &'static str,
    run: &'a CalibrationConfig,
    start: &'a ParameterSet,
}

fn calibrate_cmd(target: Target, a: CalibrateArgs) -> Outcome {
    let mut cfg = CalibrationConfig::load(&a.config).map_err(config)?;
    cfg.seed = Some(cfg.seed.unwrap_or(a.seed));
    let mut data = CalibrationData::load(&cfg).map_err(config)?;
    if !data.regime_explicit {
        data.base.regime = a.regime.into();
    }
    let outcome = calibrate(target, &data, &cfg, a.jobs).map_err(config)?;

    out_dir(&a.out_dir)?;
    let toml = to_toml(&outcome.best).map_err(config)?;
    write_text(&a.out_dir.join("best_params.toml"), &toml).map_err(config)?;
    write_history(&a.out_dir.join("history.csv"), &outcome.ga.history).map_err(config)?;
    let names = target.gene_names();
    let mut summary = String::new();
    summary.push_str(&format!("starting fitness {}\n", outcome.initial_fitness));
    summary.push_str(&format!("train fitness {}\n", outcome.train_fitness));
    match outcome.test_fitness {
        Some(t) => summary.push_str(&format!("test fitness {t}\n")),
        None => summary.push_str("test fitness n/a (no held-out scenarios)\n"),
    }
    summary.push_str(&format!("generations {}\nevaluations {}\n", outcome.ga.history.len() - 1, outcome.ga.evaluations));
    for (n, g) in names.iter().zip(&outcome.ga.best.genes) {
        summary.push_str(&format!("{n} = {g}\n"));
    }
    write_text(&a.out_dir.join("summary.txt"), &summary).map_err(config)?;
    print!("{summary}");

    let settings = CalibrationSettings {
        target: match target {
            Target::Sfm => "sfm",
            Target::Game => "game",
        },
        regime: regime_name(data.base.regime),
        run: &cfg,
        start: &data.base,
    };
    let settings = serde_json::to_value(&settings).map_err(|e| config(IoError::Config(e.to_string())))?;
    let mut inputs = vec![a.config.clone()];
    inputs.extend(cfg.input_files());
    let manifest = Manifest::new(if target == Target::Sfm { "calibrate-sfm" } else { "calibrate-game" }, cfg.seed.unwrap_or(0), settings, &inputs)
        .map_err(config)?;
    finish(manifest, &a.out_dir, vec!["best_params.toml".into(), "history.csv".into(), "summary.txt".into()])
}

fn select_features(a: SelectArgs) -> Outcome {
    let obs = Observations::load(&a.observations).map_err(config)?;
    let result = obs.select(a.baseline, a.alpha, &a.keep).map_err(config)?;
    out_dir(&a.out_dir)?;
    write_model_table(&a.out_dir.join("model_initial.csv"), &result.rounds[0]).map_err(config)?;
    write_model_table(&a.out_dir.join("model_final.csv"), &result.model).map_err(config)?;
    write_elimination_log(&a.out_dir.join("elimination_log.csv"), &result).map_err(config)?;
    for s in &result.log {
        println!("eliminated {} (p = {:.4})", s.feature, s.p_value);
    }
    println!("retained: {}", result.retained.join(", "));
    let settings = json!({ "alpha": a.alpha, "keep": a.keep, "baseline": a.baseline.to_string() });
    let manifest = Manifest::new("select-features", 0, settings, &[a.observations.clone()]).map_err(config)?;
    finish(manifest, &a.out_dir, vec!["model_initial.csv".into(), "model_final.csv".into(), "elimination_log.csv".into()])
}

fn validate(a: ValidateArgs) -> Outcome {
    let scene = load_scene(&a.scene).map_err(config)?;
    let params = resolve_params(a.params.as_deref(), RegimeArg::Hbs).map_err(config)?;
    println!(
        "scene: {} obstacles, {} intersection zones, {} road zones",
        scene.obstacles.len(),
        scene.intersection_zones.len(),
        scene.road_zones.len()
    );
    if let Some(path) = &a.scenario {
        let scenario = load_scenario(path).map_err(config)?;
        let cfg = SimulationConfig { params, ..SimulationConfig::default() };
        WorldState::new(&scene, &scenario, &cfg).map_err(|e| simulation(e.into()))?;
        println!("scenario: {} agents, all goals reachable", scenario.agents.len());
    }
    Ok(())
}
