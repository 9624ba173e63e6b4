//! Calibration drivers: dataset preparation, the positional and decision
//! fitness functions, the train/test split, GA runs and feature selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sharedspace_core::engine::{run_scenario, Scenario, SimulationConfig, SimulationTrace};
use sharedspace_core::ga::{ga_optimize, GaConfig, GaResult, GenerationStats, Objective};
use sharedspace_core::logit::{backward_eliminate, Elimination, LogitModel};
use sharedspace_core::metrics::{decision_agreement, nested_position_error};
use sharedspace_core::{Action, AgentId, Feature, ParameterSet, Scene, Vec2};

use crate::dataset::{build_scenarios, load_annotations, load_trajectories, Annotation, DatasetScenario};
use crate::error::{IoError, Result};
use crate::formats::{decision_indices, fmt_num, load_params, load_scene, parse_toml, read_text};

/// One dataset scenario ready for repeated simulation.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub data: DatasetScenario,
    pub scenario: Scenario,
    /// Annotated decisions keyed by (agent, conflict index).
    pub decisions: BTreeMap<(AgentId, usize), Action>,
}

impl PreparedScenario {
    pub fn new(data: DatasetScenario, annotations: &[Annotation], frame_seconds: f64) -> Self {
        let scenario = data.to_scenario(frame_seconds);
        let decisions = annotations
            .iter()
            .filter(|a| a.scenario_id == data.id)
            .filter_map(|a| data.track(&a.agent_id).map(|t| ((t.id, a.conflict_idx), a.action)))
            .collect();
        PreparedScenario { data, scenario, decisions }
    }

    /// Simulation settings matching the recording: one step per frame and
    /// enough steps to cover the observed span with some slack.
    pub fn sim_config(&self, params: ParameterSet, frame_seconds: f64) -> SimulationConfig {
        SimulationConfig {
            dt: frame_seconds,
            max_steps: 2 * self.data.frame_span() + 20,
            params,
            ..SimulationConfig::default()
        }
    }

    /// Simulated positions keyed by dataset frame. Agents that arrived early
    /// stay at their goal for the rest of the observed span.
    pub fn simulated_tracks(&self, trace: &SimulationTrace) -> BTreeMap<AgentId, Vec<(i64, Vec2)>> {
        let mut out = BTreeMap::new();
        for t in &self.data.tracks {
            let mut pts: Vec<(i64, Vec2)> =
                trace.trajectory(t.id).into_iter().map(|(s, p)| (self.data.start_frame + s as i64, p)).collect();
            if trace.arrived.get(&t.id).copied().unwrap_or(false) {
                let goal = t.points.last().expect("tracks are non-empty").1;
                let from = pts.last().map_or(self.data.start_frame, |p| p.0 + 1);
                pts.extend((from..=self.data.end_frame).map(|f| (f, goal)));
            }
            out.insert(t.id, pts);
        }
        out
    }
}

/// Per-user lists of per-frame position errors between observed tracks and
/// simulated ones, over the frames both contain.
pub fn position_errors(real: &BTreeMap<AgentId, Vec<(i64, Vec2)>>, sim: &BTreeMap<AgentId, Vec<(i64, Vec2)>>) -> Vec<Vec<f64>> {
    real.iter()
        .map(|(id, pts)| match sim.get(id) {
            Some(s) => sharedspace_core::metrics::displacement_errors(pts, s),
            None => Vec::new(),
        })
        .collect()
}

fn real_tracks(data: &DatasetScenario) -> BTreeMap<AgentId, Vec<(i64, Vec2)>> {
    data.tracks.iter().map(|t| (t.id, t.points.clone())).collect()
}

/// Outcome of scoring one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    pub fitness: f64,
    /// Scenarios scored at the penalty because simulation failed.
    pub failures: Vec<String>,
    /// Scenarios left out of the average.
    pub skipped: Vec<String>,
}

/// Positional fitness of a parameter set: scenario mean of user mean of
/// frame mean error in meters. A scenario that fails to simulate scores
/// `penalty`.
pub fn fitness_sfm(scene: &Scene, scenarios: &[PreparedScenario], params: &ParameterSet, frame_seconds: f64, penalty: f64) -> Result<FitnessReport> {
    let mut nested = Vec::with_capacity(scenarios.len());
    let mut failures = Vec::new();
    for s in scenarios {
        match run_scenario(scene, &s.scenario, &s.sim_config(*params, frame_seconds)) {
            Ok(trace) => nested.push(position_errors(&real_tracks(&s.data), &s.simulated_tracks(&trace))),
            Err(_) => {
                failures.push(s.data.id.clone());
                nested.push(vec![vec![penalty]]);
            }
        }
    }
    Ok(FitnessReport { fitness: nested_position_error(&nested)?, failures, skipped: Vec::new() })
}

/// Simulated decision of every (agent, conflict index) pair.
pub fn simulated_decisions(trace: &SimulationTrace) -> BTreeMap<(AgentId, usize), Action> {
    trace.decisions.iter().zip(decision_indices(trace)).map(|(d, k)| ((d.agent, k), d.action)).collect()
}

/// Per-user agreement flags. A decision the simulation never produced counts
/// as Continue.
pub fn decision_matches(annotated: &BTreeMap<(AgentId, usize), Action>, simulated: &BTreeMap<(AgentId, usize), Action>) -> Vec<bool> {
    annotated.iter().map(|(k, a)| simulated.get(k).copied().unwrap_or(Action::Continue) == *a).collect()
}

/// Decision fitness in `[-1, 1]`. Scenarios without annotations are skipped;
/// a scenario that fails to simulate counts every decision as a mismatch.
pub fn fitness_game(scene: &Scene, scenarios: &[PreparedScenario], params: &ParameterSet, frame_seconds: f64) -> Result<FitnessReport> {
    let mut nested = Vec::new();
    let mut failures = Vec::new();
    let mut skipped = Vec::new();
    for s in scenarios {
        if s.decisions.is_empty() {
            skipped.push(s.data.id.clone());
            continue;
        }
        match run_scenario(scene, &s.scenario, &s.sim_config(*params, frame_seconds)) {
            Ok(trace) => nested.push(decision_matches(&s.decisions, &simulated_decisions(&trace))),
            Err(_) => {
                failures.push(s.data.id.clone());
                nested.push(vec![false; s.decisions.len()]);
            }
        }
    }
    Ok(FitnessReport { fitness: decision_agreement(&nested)?, failures, skipped })
}

/// Seeded shuffle split; the first part holds `round(n * fraction)` items,
/// at least one when `n > 0`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64 * fraction).round() as usize).clamp(n.min(1), n);
    let test = idx.split_off(k);
    (idx, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub scene: PathBuf,
    pub trajectories: PathBuf,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    #[serde(default = "one")]
    pub meters_per_unit: f64,
    #[serde(default = "half")]
    pub frame_seconds: f64,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn train_default() -> f64 {
    0.66
}
fn penalty_default() -> f64 {
    100.0
}

/// Calibration run file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Overrides the command-line seed when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "train_default")]
    pub train_fraction: f64,
    /// Score of a scenario whose simulation fails, m.
    #[serde(default = "penalty_default")]
    pub failure_penalty: f64,
    /// Starting parameter file; defaults apply when absent.
    #[serde(default)]
    pub params: Option<PathBuf>,
    pub data: DataSection,
    /// GA settings. Empty bounds mean `[0.25×, 4×]` around the starting
    /// values; the seed is always the run seed.
    #[serde(default)]
    pub ga: GaConfig,
}

impl CalibrationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: CalibrationConfig = parse_toml(path, &read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut c.data.scene);
        fix(&mut c.data.trajectories);
        if let Some(a) = c.data.annotations.as_mut() {
            fix(a);
        }
        if let Some(p) = c.params.as_mut() {
            fix(p);
        }
        c.validate().map_err(|m| IoError::parse(path, m))?;
        Ok(c)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(format!("train_fraction must lie in (0, 1], got {}", self.train_fraction));
        }
        if !(self.data.frame_seconds > 0.0 && self.data.frame_seconds.is_finite()) {
            return Err("frame_seconds must be positive".into());
        }
        if !(self.data.meters_per_unit > 0.0 && self.data.meters_per_unit.is_finite()) {
            return Err("meters_per_unit must be positive".into());
        }
        if !self.failure_penalty.is_finite() {
            return Err("failure_penalty must be finite".into());
        }
        Ok(())
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut v = vec![self.data.scene.clone(), self.data.trajectories.clone()];
        v.extend(self.data.annotations.clone());
        v.extend(self.params.clone());
        v
    }
}

/// Everything a calibration run reads.
#[derive(Debug, Clone)]
pub struct CalibrationData {
    pub scene: Scene,
    pub base: ParameterSet,
    /// Whether the parameter file fixed the regime.
    pub regime_explicit: bool,
    pub train: Vec<PreparedScenario>,
    pub test: Vec<PreparedScenario>,
    pub frame_seconds: f64,
}

impl CalibrationData {
    pub fn load(config: &CalibrationConfig) -> Result<Self> {
        let scene = load_scene(&config.data.scene)?;
        let records = load_trajectories(&config.data.trajectories, config.data.meters_per_unit)?;
        let annotations = match &config.data.annotations {
            Some(p) => load_annotations(p)?,
            None => Vec::new(),
        };
        let (base, regime_explicit) = match &config.params {
            Some(p) => load_params(p)?,
            None => (ParameterSet::default(), false),
        };
        let mut all: Vec<Option<PreparedScenario>> = build_scenarios(&records)
            .into_iter()
            .map(|d| Some(PreparedScenario::new(d, &annotations, config.data.frame_seconds)))
            .collect();
        if all.is_empty() {
            return Err(IoError::parse(&config.data.trajectories, "no scenarios"));
        }
        let (tr, te) = split_indices(all.len(), config.train_fraction, config.seed.unwrap_or(0));
        let mut take = |idx: Vec<usize>| idx.into_iter().map(|i| all[i].take().expect("indices are unique")).collect();
        let train = take(tr);
        let test = take(te);
        Ok(CalibrationData { scene, base, regime_explicit, train, test, frame_seconds: config.data.frame_seconds })
    }
}

/// Which parameter group a run calibrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sfm,
    Game,
}

impl Target {
    pub fn gene_names(self) -> Vec<&'static str> {
        match self {
            Target::Sfm => sharedspace_core::SfmParams::GENE_NAMES.to_vec(),
            Target::Game => sharedspace_core::GameParams::GENE_NAMES.to_vec(),
        }
    }

    pub fn genes_of(self, p: &ParameterSet) -> Vec<f64> {
        match self {
            Target::Sfm => p.sfm.to_genes(),
            Target::Game => p.game.to_genes(),
        }
    }

    pub fn decode(self, base: &ParameterSet, genes: &[f64]) -> Result<ParameterSet> {
        let mut p = *base;
        match self {
            Target::Sfm => p.sfm = p.sfm.with_genes(genes)?,
            Target::Game => p.game = p.game.with_genes(genes)?,
        }
        Ok(p)
    }

    fn objective(self) -> Objective {
        match self {
            Target::Sfm => Objective::Minimize,
            Target::Game => Objective::Maximize,
        }
    }

    fn worst(self) -> f64 {
        match self {
            Target::Sfm => f64::INFINITY,
            Target::Game => f64::NEG_INFINITY,
        }
    }

    /// Fitness of one parameter set on a scenario list.
    pub fn score(self, data: &CalibrationData, scenarios: &[PreparedScenario], params: &ParameterSet, penalty: f64) -> Result<FitnessReport> {
        match self {
            Target::Sfm => fitness_sfm(&data.scene, scenarios, params, data.frame_seconds, penalty),
            Target::Game => fitness_game(&data.scene, scenarios, params, data.frame_seconds),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub best: ParameterSet,
    pub ga: GaResult,
    pub train_fitness: f64,
    /// `None` when the split left no test scenarios.
    pub test_fitness: Option<f64>,
    pub initial_fitness: f64,
}

/// Runs the GA for `target`. Chromosome batches are scored on a pool of
/// `jobs` threads; results are merged by position, so the run is identical
/// for any thread count.
pub fn calibrate(target: Target, data: &CalibrationData, config: &CalibrationConfig, jobs: usize) -> Result<CalibrationOutcome> {
    let start = target.genes_of(&data.base);
    let mut ga = config.ga.clone();
    ga.seed = config.seed.unwrap_or(0);
    ga.objective = target.objective();
    if ga.bounds.is_empty() {
        ga.bounds = GaConfig::bounds_around(&start);
    }
    if ga.bounds.len() != start.len() {
        return Err(IoError::Config(format!("{} gene bounds given, {} genes expected", ga.bounds.len(), start.len())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| IoError::Config(e.to_string()))?;
    let score = |genes: &Vec<f64>| -> f64 {
        target
            .decode(&data.base, genes)
            .and_then(|p| target.score(data, &data.train, &p, config.failure_penalty))
            .map_or(target.worst(), |r| r.fitness)
    };
    let initial_fitness = score(&start);
    let result = ga_optimize(&ga, &[start], |batch| pool.install(|| batch.par_iter().map(score).collect()))?;
    let best = target.decode(&data.base, &result.best.genes)?;
    let train_fitness = result.best.fitness.unwrap_or(target.worst());
    let test_fitness = if data.test.is_empty() {
        None
    } else {
        target.score(data, &data.test, &best, config.failure_penalty).ok().map(|r| r.fitness)
    };
    Ok(CalibrationOutcome { best, ga: result, train_fitness, test_fitness, initial_fitness })
}

pub fn write_history(path: &Path, history: &[GenerationStats]) -> Result<()> {
    let err = |e: csv::Error| IoError::parse(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["generation", "best", "mean", "best_ever", "invalid"]).map_err(err)?;
    for h in history {
        w.write_record([h.generation.to_string(), h.best.to_string(), h.mean.to_string(), h.best_ever.to_string(), h.invalid.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Feature observations for model selection: one outcome and one value per
/// feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub features: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub outcomes: Vec<Action>,
}

impl Observations {
    /// Reads a CSV whose `action` column holds the outcome and whose other
    /// columns are numeric features.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| IoError::parse(path, e))?;
        let headers = rdr.headers().map_err(|e| IoError::parse(path, e))?.clone();
        let action_col = headers
            .iter()
            .position(|h| h == "action")
            .ok_or_else(|| IoError::parse(path, "missing column action"))?;
        let features: Vec<String> = headers.iter().enumerate().filter(|(i, _)| *i != action_col).map(|(_, h)| h.to_string()).collect();
        let mut x = Vec::new();
        let mut outcomes = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| IoError::row(path, e.position().map_or(0, |p| p.line()), e))?;
            let line = row.position().map_or(0, |p| p.line());
            outcomes.push(row[action_col].parse().map_err(|_| IoError::row(path, line, format!("bad action {:?}", &row[action_col])))?);
            let vals = row
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != action_col)
                .map(|(_, v)| v.trim().parse::<f64>().ok().filter(|f| f.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| IoError::row(path, line, "non-numeric feature value"))?;
            x.push(vals);
        }
        Ok(Observations { features, x, outcomes })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| IoError::parse(path, e);
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["action".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (a, row) in self.outcomes.iter().zip(&self.x) {
            let mut rec = vec![a.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| IoError::io(path, e))
    }

    pub fn select(&self, baseline: Action, alpha: f64, keep: &[String]) -> Result<Elimination> {
        for k in keep {
            if !self.features.contains(k) {
                return Err(IoError::Config(format!("kept feature {k} is not an observation column")));
            }
        }
        Ok(backward_eliminate(&self.features, &self.x, &self.outcomes, baseline, alpha, keep)?)
    }
}

/// Canonical column names for the model features.
pub fn feature_columns(features: &[Feature]) -> Vec<String> {
    features.iter().map(|f| f.name().to_string()).collect()
}

/// Writes a coefficient table: one row per (variable, outcome).
pub fn write_model_table(path: &Path, model: &LogitModel) -> Result<()> {
    let err = |e: csv::Error| IoError::parse(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["variable", "outcome", "coefficient", "std_error", "p_value"]).map_err(err)?;
    for (k, outcome) in model.outcomes.iter().enumerate() {
        for j in 0..=model.feature_names.len() {
            let name = if j == 0 { "(Intercept)" } else { model.feature_names[j - 1].as_str() };
            w.write_record([
                name.to_string(),
                outcome.to_string(),
                fmt_num(model.coefficients[k][j]),
                fmt_num(model.std_errors[k][j]),
                fmt_num(model.p_values[k][j]),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn write_elimination_log(path: &Path, e: &Elimination) -> Result<()> {
    let err = |e: csv::Error| IoError::parse(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["round", "variable", "p_value"]).map_err(err)?;
    for (i, s) in e.log.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.feature.clone(), fmt_num(s.p_value)]).map_err(err)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Track;
    use sharedspace_core::AgentKind;

    #[test]
    fn split_sizes() {
        let (a, b) = split_indices(10, 0.66, 3);
        assert_eq!((a.len(), b.len()), (7, 3));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.66, 3), (a, b));
        assert_eq!(split_indices(1, 0.66, 0).0.len(), 1);
    }

    #[test]
    fn padding_after_arrival() {
        let data = DatasetScenario {
            id: "s".into(),
            start_frame: 10,
            end_frame: 20,
            tracks: vec![Track {
                name: "1".into(),
                id: AgentId(1),
                kind: AgentKind::Pedestrian,
                points: (10..=20).map(|f| (f, Vec2::new((f - 10) as f64 * 0.3, 0.0))).collect(),
            }],
        };
        let prep = PreparedScenario::new(data, &[], 0.5);
        let scene = Scene::empty(sharedspace_core::Rect::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)));
        let trace = run_scenario(&scene, &prep.scenario, &prep.sim_config(ParameterSet::default(), 0.5)).unwrap();
        let tracks = prep.simulated_tracks(&trace);
        let t = &tracks[&AgentId(1)];
        assert_eq!(t.first().unwrap().0, 10);
        assert_eq!(t.last().unwrap().0, 20);
        let rep = fitness_sfm(&scene, &[prep], &ParameterSet::default(), 0.5, 100.0).unwrap();
        assert!(rep.fitness < 0.5, "{}", rep.fitness);
    }

    #[test]
    fn unmatched_decisions_default_to_continue() {
        let ann: BTreeMap<_, _> = [((AgentId(1), 0), Action::Continue), ((AgentId(2), 0), Action::Decelerate)].into_iter().collect();
        let sim = BTreeMap::new();
        assert_eq!(decision_matches(&ann, &sim), vec![true, false]);
        assert_eq!(decision_agreement(&[decision_matches(&ann, &sim)]).unwrap(), 0.0);
    }
}
