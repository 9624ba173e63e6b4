use std::path::Path;

use proptest::prelude::*;
use sharedspace::calibration::{decision_matches, fitness_game, fitness_sfm, simulated_decisions, PreparedScenario};
use sharedspace::dataset::{build_scenarios, read_trajectories, write_trajectories, Annotation, TrajectoryRecord};
use sharedspace::fixtures::{open_road_scene, synthetic_dataset, SyntheticDataset};
use sharedspace_core::engine::{run_scenario, SimulationConfig};
use sharedspace_core::{AgentKind, ParameterSet, Polygon, Rect, Scene, Vec2};

fn record() -> impl Strategy<Value = TrajectoryRecord> {
    ("[a-z][a-z0-9]{0,5}", 0i64..500, 1u32..20, any::<bool>(), -1e4..1e4f64, -1e4..1e4f64).prop_map(|(s, frame, a, car, x, y)| {
        TrajectoryRecord {
            scenario_id: s,
            frame,
            agent_id: a.to_string(),
            kind: if car { AgentKind::Car } else { AgentKind::Pedestrian },
            x,
            y,
        }
    })
}

fn dedup(mut records: Vec<TrajectoryRecord>) -> Vec<TrajectoryRecord> {
    let mut seen = std::collections::BTreeSet::new();
    records.retain(|r| seen.insert((r.scenario_id.clone(), r.agent_id.clone(), r.frame)));
    records.sort_by(|a, b| (&a.scenario_id, &a.agent_id, a.frame).cmp(&(&b.scenario_id, &b.agent_id, b.frame)));
    // one kind per agent
    let mut kinds = std::collections::BTreeMap::new();
    for r in &mut records {
        r.kind = *kinds.entry((r.scenario_id.clone(), r.agent_id.clone())).or_insert(r.kind);
    }
    records
}

fn to_bytes(records: &[TrajectoryRecord], mpu: f64) -> Vec<u8> {
    let mut out = Vec::new();
    write_trajectories(&mut out, records, mpu).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn trajectory_csv_round_trips(records in prop::collection::vec(record(), 1..40)) {
        let records = dedup(records);
        let bytes = to_bytes(&records, 1.0);
        let back = read_trajectories(Path::new("mem.csv"), bytes.as_slice(), 1.0).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(to_bytes(&back, 1.0), bytes);
    }

    #[test]
    fn header_case_and_spacing_do_not_matter(records in prop::collection::vec(record(), 1..10)) {
        let records = dedup(records);
        let text = String::from_utf8(to_bytes(&records, 1.0)).unwrap();
        let (header, body) = text.split_once('\n').unwrap();
        let loud: Vec<String> = header.split(',').map(|h| format!(" {} ", h.to_uppercase())).collect();
        let shouted = format!("{}\n{}", loud.join(","), body);
        let back = read_trajectories(Path::new("mem.csv"), shouted.as_bytes(), 1.0).unwrap();
        prop_assert_eq!(to_bytes(&back, 1.0), text.into_bytes());
    }
}

fn dataset() -> &'static SyntheticDataset {
    static DATA: std::sync::OnceLock<SyntheticDataset> = std::sync::OnceLock::new();
    DATA.get_or_init(|| synthetic_dataset(4, 5, &SimulationConfig::default()).unwrap())
}

fn prepared(records: &[TrajectoryRecord], annotations: &[Annotation]) -> Vec<PreparedScenario> {
    build_scenarios(records).into_iter().map(|d| PreparedScenario::new(d, annotations, 0.5)).collect()
}

fn shifted_scene(scene: &Scene, by: Vec2) -> Scene {
    let b = Rect::new(scene.bounds.min + by, scene.bounds.max + by);
    let shift = |ps: &[Polygon]| -> Vec<Polygon> {
        ps.iter().map(|p| Polygon::new(p.vertices().iter().map(|&v| v + by).collect()).unwrap()).collect()
    };
    Scene::new(shift(&scene.obstacles), shift(&scene.intersection_zones), shift(&scene.road_zones), b, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sfm_fitness_ignores_translation(dx in -200.0..200.0f64, dy in -200.0..200.0f64) {
        let d = dataset();
        let by = Vec2::new(dx, dy);
        let moved: Vec<TrajectoryRecord> =
            d.trajectories.iter().map(|r| TrajectoryRecord { x: r.x + dx, y: r.y + dy, ..r.clone() }).collect();
        let params = ParameterSet::default();
        let base = fitness_sfm(&d.scene, &prepared(&d.trajectories, &[]), &params, 0.5, 100.0).unwrap();
        let shifted = fitness_sfm(&shifted_scene(&d.scene, by), &prepared(&moved, &[]), &params, 0.5, 100.0).unwrap();
        prop_assert!((base.fitness - shifted.fitness).abs() <= 1e-6 * base.fitness.max(1.0), "{} vs {}", base.fitness, shifted.fitness);
    }

    #[test]
    fn game_fitness_is_bounded_and_one_only_on_full_agreement(genes in prop::collection::vec(0.5..2.0f64, 6)) {
        let d = dataset();
        let mut params = ParameterSet::default();
        let scaled: Vec<f64> = params.game.to_genes().iter().zip(&genes).map(|(g, k)| g * k).collect();
        params.game = params.game.with_genes(&scaled).unwrap();
        let scenarios = prepared(&d.trajectories, &d.annotations);
        let report = fitness_game(&d.scene, &scenarios, &params, 0.5).unwrap();
        prop_assert!((-1.0..=1.0).contains(&report.fitness));
        let all = scenarios.iter().filter(|s| !s.decisions.is_empty()).all(|s| {
            let trace = run_scenario(&d.scene, &s.scenario, &s.sim_config(params, 0.5)).unwrap();
            decision_matches(&s.decisions, &simulated_decisions(&trace)).into_iter().all(|m| m)
        });
        prop_assert_eq!(report.fitness == 1.0, all);
    }
}

#[test]
fn open_road_scene_shifts_cleanly() {
    let s = shifted_scene(&open_road_scene(), Vec2::new(3.0, -4.0));
    assert!(s.in_road_zone(Vec2::new(62.0, -63.0)));
}
