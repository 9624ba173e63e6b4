//! Synthetic inputs: the canonical crossing case, a small simulated dataset
//! and feature observations with known logit structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharedspace_core::engine::{run_scenario, AgentSpec, Scenario, SimulationConfig};
use sharedspace_core::game::Feature;
use sharedspace_core::{Action, AgentId, AgentKind, Polygon, Rect, Scene, Vec2};

use crate::calibration::{feature_columns, Observations};
use crate::dataset::{Annotation, TrajectoryRecord};
use crate::error::Result;
use crate::formats::decision_indices;

/// A 120 m square that is road everywhere.
pub fn open_road_scene() -> Scene {
    let b = Rect::new(Vec2::new(-60.0, -60.0), Vec2::new(60.0, 60.0));
    Scene::new(Vec::new(), Vec::new(), vec![Polygon::rect(b.min, b.max)], b, 1.0).expect("valid scene")
}

fn spec(id: u32, kind: AgentKind, entry: u64, p: Vec2, v: Vec2, goal: Vec2, desired: f64) -> AgentSpec {
    AgentSpec { id: AgentId(id), kind, entry_step: entry, position: p, velocity: v, goal, desired_speed: desired, max_speed: None, diameter: None }
}

/// A slow car meeting a pedestrian who crosses its path. Under default
/// parameters the car yields.
pub fn crossing_scenario() -> Scenario {
    Scenario {
        agents: vec![
            spec(1, AgentKind::Car, 0, Vec2::ZERO, Vec2::new(0.8, 0.0), Vec2::new(50.0, 0.0), 4.0),
            spec(2, AgentKind::Pedestrian, 0, Vec2::new(10.0, -3.0), Vec2::new(0.0, 1.3), Vec2::new(10.0, 20.0), 1.3),
        ],
    }
}

/// Scenario `k` of the synthetic dataset: a car driving east, one or two
/// pedestrians crossing at seeded offsets and sometimes a second car.
pub fn synthetic_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let car_speed = rng.random_range(2.0..5.0);
    let mut agents = vec![spec(1, AgentKind::Car, 0, Vec2::new(-40.0, 0.0), Vec2::new(car_speed, 0.0), Vec2::new(45.0, 0.0), car_speed)];
    let peds = rng.random_range(1..=2);
    for i in 0..peds {
        let x = rng.random_range(-15.0..15.0);
        let down = rng.random_bool(0.5);
        let (y0, y1) = if down { (12.0, -12.0) } else { (-12.0, 12.0) };
        let speed = rng.random_range(1.0..1.6);
        let entry = rng.random_range(0..12);
        let dir = if down { -1.0 } else { 1.0 };
        agents.push(spec(2 + i, AgentKind::Pedestrian, entry, Vec2::new(x, y0), Vec2::new(0.0, dir * speed), Vec2::new(x, y1), speed));
    }
    if rng.random_bool(0.3) {
        let speed = rng.random_range(2.0..4.0);
        let x = rng.random_range(-10.0..10.0);
        agents.push(spec(10, AgentKind::Car, rng.random_range(0..6), Vec2::new(x, -40.0), Vec2::new(0.0, speed), Vec2::new(x, 45.0), speed));
    }
    Scenario { agents }
}

/// A simulated dataset in the ingestion layout: trajectories sampled every
/// `dt` seconds and the decisions the simulation took, as annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub scene: Scene,
    pub trajectories: Vec<TrajectoryRecord>,
    pub annotations: Vec<Annotation>,
}

pub fn synthetic_dataset(scenarios: usize, seed: u64, config: &SimulationConfig) -> Result<SyntheticDataset> {
    let scene = open_road_scene();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::new();
    let mut annotations = Vec::new();
    for k in 0..scenarios {
        let sid = format!("s{k:02}");
        let sc = synthetic_scenario(&mut rng);
        let trace = run_scenario(&scene, &sc, config)?;
        let offset = 1000 * k as i64;
        for r in trace.records() {
            trajectories.push(TrajectoryRecord {
                scenario_id: sid.clone(),
                frame: offset + r.step as i64,
                agent_id: r.id.0.to_string(),
                kind: r.kind,
                x: r.position.x,
                y: r.position.y,
            });
        }
        for (d, idx) in trace.decisions.iter().zip(decision_indices(&trace)) {
            let a = Annotation { scenario_id: sid.clone(), agent_id: d.agent.0.to_string(), conflict_idx: idx, action: d.action };
            if !annotations.contains(&a) {
                annotations.push(a);
            }
        }
    }
    Ok(SyntheticDataset { scene, trajectories, annotations })
}

fn logistic_draw(rng: &mut ChaCha8Rng, etas: &[f64]) -> usize {
    let m = etas.iter().copied().fold(0.0, f64::max);
    let w: Vec<f64> = std::iter::once(0.0).chain(etas.iter().copied()).map(|e| (e - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

/// Car decision observations drawn from a binary logit with the reference
/// car coefficients, baseline Continue. CarFollowing enters every draw twice,
/// once as 0 and once as 1, so its fitted effect is exactly nil.
pub fn car_observations(n: usize, seed: u64) -> Observations {
    let features = Feature::CAR_MODEL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut outcomes = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let own = rng.random_range(0.0..8.0);
        let comp = rng.random_range(0.0..2.5);
        let noai = rng.random_range(1..=4) as f64;
        let stopped = if rng.random_bool(0.3) { 1.0 } else { 0.0 };
        let angle = [1.0, 5.0, 6.0, 7.0, 8.0][rng.random_range(0..5)];
        let min_dist = rng.random_range(0.0..25.0);
        let giveway = rng.random_range(0..=5) as f64;
        let eta = 1.0 - 0.6371 * own + 0.5841 * comp + 0.2352 * noai + 1.7215 * stopped + 0.0755 * angle
            - 0.0548 * min_dist
            - 0.3577 * giveway;
        let y = if logistic_draw(&mut rng, &[eta]) == 1 { Action::Decelerate } else { Action::Continue };
        for following in [0.0, 1.0] {
            let row: Vec<f64> = features
                .iter()
                .map(|f| match f {
                    Feature::OwnSpeed => own,
                    Feature::CompetitorSpeed => comp,
                    Feature::Noai => noai,
                    Feature::CarStopped => stopped,
                    Feature::Angle => angle,
                    Feature::CarFollowing => following,
                    Feature::MinDist => min_dist,
                    Feature::GivewayNr => giveway,
                    _ => 0.0,
                })
                .collect();
            x.push(row);
            outcomes.push(y);
        }
    }
    Observations { features: feature_columns(&features), x, outcomes }
}

/// Pedestrian decision observations from a three-outcome logit with the
/// reference pedestrian coefficients, baseline Continue. CarFollowed is
/// duplicated at 0 and 1 the same way as CarFollowing for cars.
pub fn pedestrian_observations(n: usize, seed: u64) -> Observations {
    let features = Feature::PEDESTRIAN_MODEL;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut outcomes = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let own = rng.random_range(0.0..2.0);
        let comp = rng.random_range(0.0..2.0);
        let stopped = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let angle = [1.0, 5.0, 6.0, 7.0, 8.0][rng.random_range(0..5)];
        let dec = -2.0 + 0.5386 * own - 2.3644 * comp - 0.3278 * stopped + 0.6576 * angle;
        let dev = -2.5 + 0.2204 * own - 1.1938 * comp - 0.0418 * stopped + 0.6796 * angle;
        let y = match logistic_draw(&mut rng, &[dec, dev]) {
            0 => Action::Continue,
            1 => Action::Decelerate,
            _ => Action::Deviate,
        };
        for followed in [0.0, 1.0] {
            let row: Vec<f64> = features
                .iter()
                .map(|f| match f {
                    Feature::OwnSpeed => own,
                    Feature::CompetitorSpeed => comp,
                    Feature::CarStopped => stopped,
                    Feature::Angle => angle,
                    Feature::CarFollowed => followed,
                    _ => 0.0,
                })
                .collect();
            x.push(row);
            outcomes.push(y);
        }
    }
    Observations { features: feature_columns(&features), x, outcomes }
}

/// Observations for one agent kind.
pub fn table_shaped_observations(kind: AgentKind, n: usize, seed: u64) -> Observations {
    match kind {
        AgentKind::Car => car_observations(n, seed),
        AgentKind::Pedestrian => pedestrian_observations(n, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_case_yields_and_keeps_distance() {
        let t = run_scenario(&open_road_scene(), &crossing_scenario(), &SimulationConfig::default()).unwrap();
        let car = t.decisions.iter().find(|d| d.agent == AgentId(1)).unwrap();
        assert_eq!(car.action, Action::Decelerate);
        let min = t
            .steps
            .iter()
            .filter_map(|s| {
                let c = s.iter().find(|r| r.id == AgentId(1))?;
                let p = s.iter().find(|r| r.id == AgentId(2))?;
                Some(c.position.distance(p.position))
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min > 4.0, "{min}");
    }

    #[test]
    fn synthetic_dataset_has_decisions() {
        let d = synthetic_dataset(6, 1, &SimulationConfig::default()).unwrap();
        assert!(!d.trajectories.is_empty());
        assert!(!d.annotations.is_empty());
    }

    #[test]
    fn observation_shapes() {
        let o = table_shaped_observations(AgentKind::Car, 10, 0);
        assert_eq!(o.x.len(), 20);
        assert_eq!(o.features.len(), 8);
        let o = table_shaped_observations(AgentKind::Pedestrian, 10, 0);
        assert_eq!(o.features.len(), 5);
    }
}
