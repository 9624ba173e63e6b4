//! Trajectory datasets, decision annotations and scenario extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use sharedspace_core::engine::{AgentSpec, Scenario};
use sharedspace_core::{Action, AgentId, AgentKind, Vec2};

use crate::error::{IoError, Result};

pub const TRAJECTORY_HEADER: [&str; 6] = ["scenario_id", "frame", "agent_id", "kind", "x", "y"];
pub const ANNOTATION_HEADER: [&str; 4] = ["scenario_id", "agent_id", "conflict_idx", "action"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub scenario_id: String,
    pub frame: i64,
    pub agent_id: String,
    pub kind: AgentKind,
    /// Meters.
    pub x: f64,
    pub y: f64,
}

impl TrajectoryRecord {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

pub fn parse_kind(s: &str) -> Option<AgentKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "ped" | "pedestrian" => Some(AgentKind::Pedestrian),
        "car" => Some(AgentKind::Car),
        _ => None,
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| IoError::parse(path, e))?;
    let got: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if got != expected {
        return Err(IoError::row(path, 1, format!("expected header {}, found {}", expected.join(","), got.join(","))));
    }
    Ok(())
}

/// Parses trajectory CSV text. Coordinates are multiplied by
/// `meters_per_unit`; frames of each agent must strictly increase.
pub fn read_trajectories(path: &Path, reader: impl Read, meters_per_unit: f64) -> Result<Vec<TrajectoryRecord>> {
    if !(meters_per_unit > 0.0 && meters_per_unit.is_finite()) {
        return Err(IoError::Config(format!("meters_per_unit must be positive, got {meters_per_unit}")));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(path, &mut rdr, &TRAJECTORY_HEADER)?;
    let mut last: BTreeMap<(String, String), (i64, AgentKind)> = BTreeMap::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            IoError::row(path, line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| IoError::row(path, line, m);
        if row.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", row.len())));
        }
        let frame: i64 = row[1].parse().map_err(|_| bad(format!("bad frame '{}'", &row[1])))?;
        let kind = parse_kind(&row[3]).ok_or_else(|| bad(format!("bad kind '{}' (ped or car)", &row[3])))?;
        let x: f64 = row[4].parse().map_err(|_| bad(format!("bad x '{}'", &row[4])))?;
        let y: f64 = row[5].parse().map_err(|_| bad(format!("bad y '{}'", &row[5])))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(bad("non-finite coordinate".into()));
        }
        let key = (row[0].to_string(), row[2].to_string());
        if let Some(&(prev, prev_kind)) = last.get(&key) {
            if frame == prev {
                return Err(bad(format!("duplicate frame {frame} for agent {}", key.1)));
            }
            if frame < prev {
                return Err(bad(format!("frames of agent {} not increasing ({prev} then {frame})", key.1)));
            }
            if kind != prev_kind {
                return Err(bad(format!("agent {} changes kind", key.1)));
            }
        }
        last.insert(key, (frame, kind));
        out.push(TrajectoryRecord {
            scenario_id: row[0].to_string(),
            frame,
            agent_id: row[2].to_string(),
            kind,
            x: x * meters_per_unit,
            y: y * meters_per_unit,
        });
    }
    Ok(out)
}

pub fn load_trajectories(path: &Path, meters_per_unit: f64) -> Result<Vec<TrajectoryRecord>> {
    let f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_trajectories(path, f, meters_per_unit)
}

/// Serializes records, dividing coordinates by `meters_per_unit`.
pub fn write_trajectories(writer: impl std::io::Write, records: &[TrajectoryRecord], meters_per_unit: f64) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in records {
        w.write_record([
            r.scenario_id.clone(),
            r.frame.to_string(),
            r.agent_id.clone(),
            r.kind.short_name().to_string(),
            (r.x / meters_per_unit).to_string(),
            (r.y / meters_per_unit).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Annotation {
    pub scenario_id: String,
    pub agent_id: String,
    pub conflict_idx: usize,
    pub action: Action,
}

pub fn read_annotations(path: &Path, reader: impl Read) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(path, &mut rdr, &ANNOTATION_HEADER)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| IoError::row(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |m: String| IoError::row(path, line, m);
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let conflict_idx: usize = row[2].parse().map_err(|_| bad(format!("bad conflict_idx '{}'", &row[2])))?;
        let action: Action = row[3].parse().map_err(|_| bad(format!("bad action '{}'", &row[3])))?;
        let a = Annotation { scenario_id: row[0].to_string(), agent_id: row[1].to_string(), conflict_idx, action };
        if !seen.insert((a.scenario_id.clone(), a.agent_id.clone(), conflict_idx)) {
            return Err(bad(format!("duplicate annotation for agent {} conflict {conflict_idx}", a.agent_id)));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_annotations(path, f)
}

pub fn write_annotations(writer: impl std::io::Write, annotations: &[Annotation]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ANNOTATION_HEADER)?;
    for a in annotations {
        w.write_record([a.scenario_id.clone(), a.agent_id.clone(), a.conflict_idx.to_string(), a.action.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One agent's observed track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    pub id: AgentId,
    pub kind: AgentKind,
    pub points: Vec<(i64, Vec2)>,
}

impl Track {
    /// Path length over elapsed time, m/s.
    pub fn mean_speed(&self, frame_seconds: f64) -> Option<f64> {
        let (first, last) = (self.points.first()?, self.points.last()?);
        let t = (last.0 - first.0) as f64 * frame_seconds;
        let len: f64 = self.points.windows(2).map(|w| w[0].1.distance(w[1].1)).sum();
        (t > 0.0).then_some(len / t)
    }

    pub fn max_step_speed(&self, frame_seconds: f64) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].1.distance(w[1].1) / ((w[1].0 - w[0].0) as f64 * frame_seconds))
            .fold(0.0, f64::max)
    }
}

/// The agents of one scenario id.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetScenario {
    pub id: String,
    pub start_frame: i64,
    pub end_frame: i64,
    pub tracks: Vec<Track>,
}

fn default_speed(kind: AgentKind) -> f64 {
    match kind {
        AgentKind::Pedestrian => 1.3,
        AgentKind::Car => 4.0,
    }
}

impl DatasetScenario {
    pub fn track(&self, name: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.name == name)
    }

    pub fn name_of(&self, id: AgentId) -> String {
        self.tracks.iter().find(|t| t.id == id).map_or_else(|| id.to_string(), |t| t.name.clone())
    }

    pub fn frame_span(&self) -> u64 {
        (self.end_frame - self.start_frame).max(0) as u64
    }

    /// Initial states and goals taken from the observed tracks: entry at the
    /// first frame, goal at the last position, desired speed equal to the
    /// mean observed speed.
    pub fn to_scenario(&self, frame_seconds: f64) -> Scenario {
        let agents = self
            .tracks
            .iter()
            .filter(|t| !t.points.is_empty())
            .map(|t| {
                let (f0, p0) = t.points[0];
                let velocity = match t.points.get(1) {
                    Some(&(f1, p1)) => (p1 - p0) / ((f1 - f0) as f64 * frame_seconds),
                    None => Vec2::ZERO,
                };
                let max_speed = t.kind.default_max_speed().max(1.25 * t.max_step_speed(frame_seconds));
                let velocity = if velocity.norm() > max_speed { velocity * (max_speed / velocity.norm()) } else { velocity };
                AgentSpec {
                    id: t.id,
                    kind: t.kind,
                    entry_step: (f0 - self.start_frame) as u64,
                    position: p0,
                    velocity,
                    goal: t.points.last().expect("non-empty").1,
                    desired_speed: t.mean_speed(frame_seconds).unwrap_or_else(|| default_speed(t.kind)).min(max_speed),
                    max_speed: Some(max_speed),
                    diameter: None,
                }
            })
            .collect();
        Scenario { agents }
    }
}

/// Groups records by scenario and agent. Agent names that all parse as
/// integers keep their number as id; otherwise ids are 1.. in name order.
pub fn build_scenarios(records: &[TrajectoryRecord]) -> Vec<DatasetScenario> {
    let mut grouped: BTreeMap<&str, BTreeMap<&str, (AgentKind, Vec<(i64, Vec2)>)>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(&r.scenario_id)
            .or_default()
            .entry(&r.agent_id)
            .or_insert_with(|| (r.kind, Vec::new()))
            .1
            .push((r.frame, r.position()));
    }
    grouped
        .into_iter()
        .map(|(sid, agents)| {
            let numeric: Option<Vec<u32>> = agents.keys().map(|k| k.parse().ok()).collect();
            let tracks: Vec<Track> = agents
                .into_iter()
                .enumerate()
                .map(|(i, (name, (kind, mut points)))| {
                    points.sort_by_key(|p| p.0);
                    let id = match &numeric {
                        Some(n) => AgentId(n[i]),
                        None => AgentId(i as u32 + 1),
                    };
                    Track { name: name.to_string(), id, kind, points }
                })
                .collect();
            let start_frame = tracks.iter().filter_map(|t| t.points.first()).map(|p| p.0).min().unwrap_or(0);
            let end_frame = tracks.iter().filter_map(|t| t.points.last()).map(|p| p.0).max().unwrap_or(0);
            DatasetScenario { id: sid.to_string(), start_frame, end_frame, tracks }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn scales_to_meters() {
        let text = "scenario_id,frame,agent_id,kind,x,y\ns1,0,a,ped,100,200\ns1,1,a,ped,102,200\n";
        let r = read_trajectories(p(), text.as_bytes(), 0.05).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].x, r[0].y), (5.0, 10.0));
    }

    #[test]
    fn header_only_is_empty() {
        let r = read_trajectories(p(), "scenario_id,frame,agent_id,kind,x,y\n".as_bytes(), 1.0).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let dup = "scenario_id,frame,agent_id,kind,x,y\ns,0,a,car,0,0\ns,0,a,car,1,0\n";
        match read_trajectories(p(), dup.as_bytes(), 1.0) {
            Err(IoError::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let back = "scenario_id,frame,agent_id,kind,x,y\ns,2,a,car,0,0\ns,1,a,car,1,0\n";
        assert!(read_trajectories(p(), back.as_bytes(), 1.0).is_err());
        let kind = "scenario_id,frame,agent_id,kind,x,y\ns,0,a,bike,0,0\n";
        assert!(read_trajectories(p(), kind.as_bytes(), 1.0).is_err());
        let header = "scenario,frame,agent,kind,x,y\n";
        assert!(read_trajectories(p(), header.as_bytes(), 1.0).is_err());
    }

    #[test]
    fn annotations_parse() {
        let text = "scenario_id,agent_id,conflict_idx,action\ns,1,0,decelerate\ns,2,0,accelerate\n";
        let a = read_annotations(p(), text.as_bytes()).unwrap();
        assert_eq!(a[1].action, Action::Continue);
        let dup = "scenario_id,agent_id,conflict_idx,action\ns,1,0,decelerate\ns,1,0,deviate\n";
        assert!(read_annotations(p(), dup.as_bytes()).is_err());
    }

    #[test]
    fn scenario_from_tracks() {
        let text = "scenario_id,frame,agent_id,kind,x,y\ns,10,7,ped,0,0\ns,11,7,ped,0.5,0\ns,12,7,ped,1,0\ns,11,9,car,20,0\ns,12,9,car,18,0\n";
        let recs = read_trajectories(p(), text.as_bytes(), 1.0).unwrap();
        let sc = build_scenarios(&recs);
        assert_eq!(sc.len(), 1);
        assert_eq!((sc[0].start_frame, sc[0].end_frame), (10, 12));
        let s = sc[0].to_scenario(0.5);
        let ped = s.agents.iter().find(|a| a.id == AgentId(7)).unwrap();
        assert_eq!(ped.velocity, Vec2::new(1.0, 0.0));
        assert_eq!(ped.goal, Vec2::new(1.0, 0.0));
        assert!((ped.desired_speed - 1.0).abs() < 1e-12);
        let car = s.agents.iter().find(|a| a.id == AgentId(9)).unwrap();
        assert_eq!(car.entry_step, 1);
    }
}
