//! Real-versus-simulated comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sharedspace_core::metrics::{ade, mean_std, speed_deviation, ConfusionMatrix};
use sharedspace_core::{Action, AgentKind, Error as CoreError, Vec2};

use crate::dataset::{Annotation, TrajectoryRecord};
use crate::error::{IoError, Result};
use crate::formats::fmt_num;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMetrics {
    pub scenario_id: String,
    pub agent_id: String,
    pub kind: AgentKind,
    pub common_frames: usize,
    pub ade: f64,
    /// Undefined with fewer than two common frames.
    pub speed_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KindSummary {
    pub kind: AgentKind,
    pub agents: usize,
    pub ade_mean: f64,
    pub ade_std: f64,
    pub speed_mean: Option<f64>,
    pub speed_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSummary {
    pub total: usize,
    pub mismatches: usize,
    pub error_rate: f64,
    pub confusion: BTreeMap<&'static str, ConfusionMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub agents: Vec<AgentMetrics>,
    pub summary: Vec<KindSummary>,
    pub decisions: Option<DecisionSummary>,
}

type Tracks = BTreeMap<(String, String), (AgentKind, Vec<(i64, Vec2)>)>;

fn group(records: &[TrajectoryRecord]) -> Tracks {
    let mut t: Tracks = BTreeMap::new();
    for r in records {
        t.entry((r.scenario_id.clone(), r.agent_id.clone()))
            .or_insert_with(|| (r.kind, Vec::new()))
            .1
            .push((r.frame, r.position()));
    }
    for (_, pts) in t.values_mut() {
        pts.sort_by_key(|p| p.0);
    }
    t
}

/// Per-agent ADE and speed deviation for every agent of `real`.
pub fn compare_trajectories(real: &[TrajectoryRecord], sim: &[TrajectoryRecord], frame_seconds: f64) -> Result<Vec<AgentMetrics>> {
    let sim = group(sim);
    let mut out = Vec::new();
    for ((sid, aid), (kind, pts)) in group(real) {
        let Some((_, spts)) = sim.get(&(sid.clone(), aid.clone())) else {
            return Err(CoreError::Alignment(format!("agent {aid} of scenario {sid} missing from the simulation")).into());
        };
        let err = ade(&pts, spts).map_err(|_| CoreError::Alignment(format!("agent {aid} of scenario {sid} shares no frames")))?;
        let common = sharedspace_core::metrics::common_frames(&pts, spts).len();
        out.push(AgentMetrics {
            scenario_id: sid,
            agent_id: aid,
            kind,
            common_frames: common,
            ade: err,
            speed_deviation: speed_deviation(&pts, spts, frame_seconds).ok(),
        });
    }
    Ok(out)
}

pub fn summarize(agents: &[AgentMetrics]) -> Vec<KindSummary> {
    [AgentKind::Pedestrian, AgentKind::Car]
        .into_iter()
        .filter_map(|kind| {
            let mine: Vec<&AgentMetrics> = agents.iter().filter(|a| a.kind == kind).collect();
            let ades: Vec<f64> = mine.iter().map(|a| a.ade).collect();
            let speeds: Vec<f64> = mine.iter().filter_map(|a| a.speed_deviation).collect();
            let (ade_mean, ade_std) = mean_std(&ades)?;
            let sp = mean_std(&speeds);
            Some(KindSummary { kind, agents: mine.len(), ade_mean, ade_std, speed_mean: sp.map(|s| s.0), speed_std: sp.map(|s| s.1) })
        })
        .collect()
}

/// Compares annotated decisions with simulated ones. A decision the
/// simulation never produced counts as Continue.
pub fn compare_decisions(
    annotations: &[Annotation],
    simulated: &[Annotation],
    kinds: &BTreeMap<(String, String), AgentKind>,
) -> Result<DecisionSummary> {
    if annotations.is_empty() {
        return Err(CoreError::UndefinedMetric("no annotated decisions").into());
    }
    let sim: BTreeMap<(&str, &str, usize), Action> = simulated
        .iter()
        .map(|a| ((a.scenario_id.as_str(), a.agent_id.as_str(), a.conflict_idx), a.action))
        .collect();
    let mut confusion: BTreeMap<&'static str, ConfusionMatrix> = BTreeMap::new();
    let mut mismatches = 0;
    for a in annotations {
        let kind = kinds.get(&(a.scenario_id.clone(), a.agent_id.clone())).ok_or_else(|| {
            CoreError::Alignment(format!("annotated agent {} of scenario {} has no trajectory", a.agent_id, a.scenario_id))
        })?;
        let s = sim.get(&(a.scenario_id.as_str(), a.agent_id.as_str(), a.conflict_idx)).copied().unwrap_or(Action::Continue);
        if s != a.action {
            mismatches += 1;
        }
        confusion.entry(kind.short_name()).or_default().record(a.action, s);
    }
    Ok(DecisionSummary {
        total: annotations.len(),
        mismatches,
        error_rate: mismatches as f64 / annotations.len() as f64,
        confusion,
    })
}

pub fn kinds_of(records: &[TrajectoryRecord]) -> BTreeMap<(String, String), AgentKind> {
    records.iter().map(|r| ((r.scenario_id.clone(), r.agent_id.clone()), r.kind)).collect()
}

/// Reads the decisions CSV written by `simulate`.
pub fn load_sim_decisions(path: &Path) -> Result<Vec<Annotation>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IoError::parse(path, e))?;
    let headers = rdr.headers().map_err(|e| IoError::parse(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IoError::parse(path, format!("missing column {name}")))
    };
    let (s, a, i, act) = (col("scenario_id")?, col("agent_id")?, col("conflict_idx")?, col("action")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| IoError::row(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(Annotation {
            scenario_id: row[s].to_string(),
            agent_id: row[a].to_string(),
            conflict_idx: row[i].parse().map_err(|_| IoError::row(path, line, "bad conflict_idx"))?,
            action: row[act].parse().map_err(|_| IoError::row(path, line, "bad action"))?,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_num)
}

impl MetricReport {
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
        let mut written = Vec::new();
        let csv_err = |p: &Path| {
            let p = p.to_path_buf();
            move |e: csv::Error| IoError::parse(&p, e)
        };

        let path = dir.join("metrics_agents.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["scenario_id", "agent_id", "kind", "common_frames", "ade", "speed_deviation"]).map_err(csv_err(&path))?;
        for a in &self.agents {
            w.write_record([
                a.scenario_id.clone(),
                a.agent_id.clone(),
                a.kind.short_name().into(),
                a.common_frames.to_string(),
                fmt_num(a.ade),
                opt(a.speed_deviation),
            ])
            .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| IoError::io(&path, e))?;
        written.push("metrics_agents.csv".to_string());

        let path = dir.join("metrics_summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(["kind", "agents", "ade_mean", "ade_std", "speed_mean", "speed_std"]).map_err(csv_err(&path))?;
        for s in &self.summary {
            w.write_record([
                s.kind.short_name().into(),
                s.agents.to_string(),
                fmt_num(s.ade_mean),
                fmt_num(s.ade_std),
                opt(s.speed_mean),
                opt(s.speed_std),
            ])
            .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| IoError::io(&path, e))?;
        written.push("metrics_summary.csv".to_string());

        if let Some(d) = &self.decisions {
            let path = dir.join("decision_confusion.csv");
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            w.write_record(["kind", "real", "sim_continue", "sim_decelerate", "sim_deviate"]).map_err(csv_err(&path))?;
            for (kind, m) in &d.confusion {
                for real in Action::ALL {
                    let row = m.counts[ConfusionMatrix::index(real)];
                    w.write_record([kind.to_string(), real.to_string(), row[0].to_string(), row[1].to_string(), row[2].to_string()])
                        .map_err(csv_err(&path))?;
                }
            }
            w.flush().map_err(|e| IoError::io(&path, e))?;
            written.push("decision_confusion.csv".to_string());
        }

        let path = dir.join("summary.txt");
        std::fs::write(&path, self.summary_text()).map_err(|e| IoError::io(&path, e))?;
        written.push("summary.txt".to_string());
        Ok(written)
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for k in &self.summary {
            let _ = writeln!(
                s,
                "{:<4} agents={:<4} ADE {:.4} ± {:.4} m   speed deviation {} m/s",
                k.kind.short_name(),
                k.agents,
                k.ade_mean,
                k.ade_std,
                match (k.speed_mean, k.speed_std) {
                    (Some(m), Some(sd)) => format!("{m:.4} ± {sd:.4}"),
                    _ => "n/a".into(),
                }
            );
        }
        if let Some(d) = &self.decisions {
            let _ = writeln!(s, "decisions: {} of {} differ (error rate {:.4})", d.mismatches, d.total, d.error_rate);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: &str, f: i64, a: &str, kind: AgentKind, x: f64) -> TrajectoryRecord {
        TrajectoryRecord { scenario_id: s.into(), frame: f, agent_id: a.into(), kind, x, y: 0.0 }
    }

    #[test]
    fn identical_is_zero() {
        let real: Vec<_> = (0..4).map(|f| rec("s", f, "1", AgentKind::Car, f as f64)).collect();
        let m = compare_trajectories(&real, &real, 0.5).unwrap();
        assert_eq!(m[0].ade, 0.0);
        assert_eq!(m[0].speed_deviation, Some(0.0));
        let s = summarize(&m);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].ade_mean, s[0].ade_std), (0.0, 0.0));
    }

    #[test]
    fn missing_agent_is_alignment_error() {
        let real = vec![rec("s", 0, "1", AgentKind::Car, 0.0)];
        let sim = vec![rec("s", 0, "2", AgentKind::Car, 0.0)];
        assert!(matches!(compare_trajectories(&real, &sim, 0.5), Err(IoError::Model(CoreError::Alignment(_)))));
    }

    #[test]
    fn decisions_default_to_continue() {
        let ann = vec![
            Annotation { scenario_id: "s".into(), agent_id: "1".into(), conflict_idx: 0, action: Action::Decelerate },
            Annotation { scenario_id: "s".into(), agent_id: "2".into(), conflict_idx: 0, action: Action::Continue },
        ];
        let sim = vec![Annotation { scenario_id: "s".into(), agent_id: "1".into(), conflict_idx: 0, action: Action::Decelerate }];
        let kinds = [(("s".to_string(), "1".to_string()), AgentKind::Car), (("s".to_string(), "2".to_string()), AgentKind::Pedestrian)]
            .into_iter()
            .collect();
        let d = compare_decisions(&ann, &sim, &kinds).unwrap();
        assert_eq!(d.error_rate, 0.0);
        assert_eq!(d.confusion["car"].counts[1][1], 1);
    }
}
