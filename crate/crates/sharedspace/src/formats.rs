//! TOML inputs, CSV trace outputs and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sharedspace_core::engine::{Scenario, SimulationTrace};
use sharedspace_core::{AgentId, ParameterSet, Polygon, Rect, Regime, Scene, Vec2};

use crate::error::{IoError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| IoError::parse(path, e.message()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub min: Vec2,
    pub max: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonFile {
    pub vertices: Vec<Vec2>,
}

/// On-disk scene. Coordinates are in dataset units and get multiplied by
/// `meters_per_unit` on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default = "unit_scale")]
    pub meters_per_unit: f64,
    pub bounds: BoundsFile,
    #[serde(default)]
    pub obstacles: Vec<PolygonFile>,
    #[serde(default)]
    pub intersection_zones: Vec<PolygonFile>,
    #[serde(default)]
    pub road_zones: Vec<PolygonFile>,
}

fn unit_scale() -> f64 {
    1.0
}

impl SceneFile {
    pub fn into_scene(self) -> Result<Scene> {
        let k = self.meters_per_unit;
        if !(k > 0.0 && k.is_finite()) {
            return Err(IoError::Config(format!("meters_per_unit must be positive, got {k}")));
        }
        let polys = |list: Vec<PolygonFile>| -> Result<Vec<Polygon>> {
            list.into_iter()
                .map(|p| Polygon::new(p.vertices.into_iter().map(|v| v * k).collect()).map_err(IoError::from))
                .collect()
        };
        let bounds = Rect::new(self.bounds.min * k, self.bounds.max * k);
        Ok(Scene::new(polys(self.obstacles)?, polys(self.intersection_zones)?, polys(self.road_zones)?, bounds, k)?)
    }

    pub fn from_scene(scene: &Scene) -> Self {
        let k = scene.meters_per_unit;
        let polys = |list: &[Polygon]| {
            list.iter().map(|p| PolygonFile { vertices: p.vertices().iter().map(|&v| v / k).collect() }).collect()
        };
        SceneFile {
            meters_per_unit: k,
            bounds: BoundsFile { min: scene.bounds.min / k, max: scene.bounds.max / k },
            obstacles: polys(&scene.obstacles),
            intersection_zones: polys(&scene.intersection_zones),
            road_zones: polys(&scene.road_zones),
        }
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let file: SceneFile = parse_toml(path, &read_text(path)?)?;
    file.into_scene().map_err(|e| match e {
        IoError::Model(m) => IoError::parse(path, m),
        other => other,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = parse_toml(path, &read_text(path)?)?;
    s.validate().map_err(|e| IoError::parse(path, e))?;
    Ok(s)
}

/// Loads a parameter file. The second value tells whether the file set the
/// regime explicitly.
pub fn load_params(path: &Path) -> Result<(ParameterSet, bool)> {
    let text = read_text(path)?;
    let raw: toml::Table = parse_toml(path, &text)?;
    let p: ParameterSet = parse_toml(path, &text)?;
    p.validate().map_err(|e| IoError::parse(path, e))?;
    Ok((p, raw.contains_key("regime")))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| IoError::Config(e.to_string()))
}

/// Shortest round-trip text of a number, in exponent form when tiny or huge.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

pub fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Hbs => "hbs",
        Regime::Dut => "dut",
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| IoError::parse(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |e| IoError::parse(path, e)
}

/// Writes the simulated trajectories in the dataset CSV layout. Frames are
/// `frame_offset + step`; coordinates are divided by `meters_per_unit`.
pub fn write_trace_trajectories(
    path: &Path,
    scenario_id: &str,
    trace: &SimulationTrace,
    frame_offset: i64,
    meters_per_unit: f64,
    names: &dyn Fn(AgentId) -> String,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["scenario_id", "frame", "agent_id", "kind", "x", "y"]).map_err(&err)?;
    for r in trace.records() {
        let p = r.position / meters_per_unit;
        w.write_record([
            scenario_id.to_string(),
            (frame_offset + r.step as i64).to_string(),
            names(r.id),
            r.kind.short_name().to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Per-agent ordinal of each decision: the k-th game an agent joins gets
/// conflict index k.
pub fn decision_indices(trace: &SimulationTrace) -> Vec<usize> {
    let mut seen: std::collections::BTreeMap<AgentId, (u64, usize)> = Default::default();
    trace
        .decisions
        .iter()
        .map(|d| {
            let e = seen.entry(d.agent).or_insert((d.game_id, 0));
            if e.0 != d.game_id {
                *e = (d.game_id, e.1 + 1);
            }
            e.1
        })
        .collect()
}

pub fn write_decisions(path: &Path, scenario_id: &str, trace: &SimulationTrace, names: &dyn Fn(AgentId) -> String) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["scenario_id", "step", "conflict_id", "agent_id", "conflict_idx", "role", "action", "class"])
        .map_err(&err)?;
    for (d, idx) in trace.decisions.iter().zip(decision_indices(trace)) {
        w.write_record([
            scenario_id.to_string(),
            d.step.to_string(),
            d.game_id.to_string(),
            names(d.agent),
            idx.to_string(),
            format!("{:?}", d.role).to_lowercase(),
            d.action.to_string(),
            format!("{:?}", d.class),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// Effective settings after defaults, flags and files were merged.
    pub settings: serde_json::Value,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, settings: serde_json::Value, inputs: &[PathBuf]) -> Result<Self> {
        let canonical = serde_json::to_vec(&settings).map_err(|e| IoError::Config(e.to_string()))?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(&canonical),
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            settings,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
        let text = serde_json::to_string_pretty(self).map_err(|e| IoError::Config(e.to_string()))?;
        writeln!(f, "{text}").map_err(|e| IoError::io(path, e))
    }
}
