use proptest::prelude::*;
use sharedspace_core::conflicts::{candidate_sets, Snapshot, CAR_GATE_DEG, PEDESTRIAN_GATE_DEG};
use sharedspace_core::{recognize_conflicts, AgentId, AgentKind, AgentState, ConflictClass, Polygon, Rect, Scene, SfmParams, Vec2};

fn bounds() -> Rect {
    Rect::new(Vec2::new(-100.0, -100.0), Vec2::new(100.0, 100.0))
}

/// Intersection zone over the left half, plain road elsewhere.
fn split_scene() -> Scene {
    let zone = Polygon::rect(Vec2::new(-100.0, -100.0), Vec2::new(0.0, 100.0));
    Scene::new(vec![], vec![zone], vec![], bounds(), 1.0).unwrap()
}

fn junction_scene() -> Scene {
    let zone = Polygon::rect(bounds().min, bounds().max);
    Scene::new(vec![], vec![zone], vec![], bounds(), 1.0).unwrap()
}

fn kind() -> impl Strategy<Value = AgentKind> {
    prop_oneof![Just(AgentKind::Pedestrian), Just(AgentKind::Car)]
}

fn agent() -> impl Strategy<Value = (AgentKind, (f64, f64), f64, (f64, f64), f64)> {
    (kind(), (-25.0..25.0f64, -25.0..25.0f64), 0.0..360.0f64, (-40.0..40.0f64, -40.0..40.0f64), 0.1..2.0f64)
}

fn build(specs: &[(AgentKind, (f64, f64), f64, (f64, f64), f64)]) -> Vec<AgentState> {
    specs
        .iter()
        .enumerate()
        .map(|(n, &(k, p, h, g, speed))| {
            let heading = Vec2::from_angle_deg(h);
            AgentState::new(AgentId(n as u32 + 1), k, Vec2::new(p.0, p.1), Vec2::new(g.0, g.1), speed)
                .with_heading(heading)
                .with_velocity(heading * speed)
                .with_max_speed(speed)
        })
        .collect()
}

/// Angle between `heading` and `to`, in `[0, 180]` degrees.
fn angle_between(heading: Vec2, to: Vec2) -> f64 {
    let c = heading.dot(to) / (heading.norm() * to.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn recognition_is_idempotent_and_never_lists_the_anchor(specs in prop::collection::vec(agent(), 1..8)) {
        let scene = split_scene();
        let params = SfmParams::default();
        let agents = build(&specs);
        let first = recognize_conflicts(&agents, &scene, &params, 3);
        let second = recognize_conflicts(&agents, &scene, &params, 3);
        prop_assert_eq!(&first, &second);
        for c in &first {
            let anchor = agents.iter().find(|a| a.id == c.anchor_car).unwrap();
            prop_assert!(anchor.is_car());
            prop_assert!(c.class != ConflictClass::NoNewConflict);
            prop_assert!(!c.competitive_users.is_empty());
            prop_assert!(!c.competitive_users.contains(&c.anchor_car));
        }
    }

    #[test]
    fn pedestrian_straight_behind_is_never_in_conflict(
        pos in (-50.0..50.0f64, -50.0..50.0f64), heading in 0.0..360.0f64, back in 0.1..18.0f64,
        ped_heading in 0.0..360.0f64, ped_goal in (-60.0..60.0f64, -60.0..60.0f64),
        junction in any::<bool>(),
    ) {
        let scene = if junction { junction_scene() } else { Scene::empty(bounds()) };
        let params = SfmParams::default();
        let e = Vec2::from_angle_deg(heading);
        let car_pos = Vec2::new(pos.0, pos.1);
        let car = AgentState::new(AgentId(1), AgentKind::Car, car_pos, car_pos + e * 50.0, 5.0).with_velocity(e * 5.0);
        let p = car_pos - e * back;
        let h = Vec2::from_angle_deg(ped_heading);
        let ped = AgentState::new(AgentId(2), AgentKind::Pedestrian, p, Vec2::new(ped_goal.0, ped_goal.1), 1.3)
            .with_heading(h)
            .with_velocity(h * 1.3);
        let agents = [car, ped];
        let found = recognize_conflicts(&agents, &scene, &params, 0);
        prop_assert!(found.iter().all(|c| !c.competitive_users.contains(&AgentId(2))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn angle_gates_match_brute_force(
        heading in 0.0..360.0f64, target in (-15.0..15.0f64, -15.0..15.0f64), other in kind(),
    ) {
        let scene = junction_scene();
        let params = SfmParams { d_min_pc: 1e6, d_min_cc: 1e6, view_range: 1e6, ..SfmParams::default() };
        let e = Vec2::from_angle_deg(heading);
        let car = AgentState::new(AgentId(1), AgentKind::Car, Vec2::ZERO, e * 50.0, 4.0).with_velocity(e * 4.0);
        let t = Vec2::new(target.0, target.1);
        prop_assume!(t.norm() > 1e-6);
        let j = AgentState::new(AgentId(2), other, t, t + Vec2::new(1.0, 0.0), 1.0);
        let gate = if other == AgentKind::Car { CAR_GATE_DEG } else { PEDESTRIAN_GATE_DEG };
        let angle = angle_between(e, t);
        prop_assume!((angle - gate).abs() > 1e-6);
        let world = Snapshot::new([&car, &j]);
        let cand = candidate_sets(&car, &world, &scene, &params);
        let member = cand.peds.contains(&j.id) || cand.cars.contains(&j.id);
        prop_assert_eq!(member, angle <= gate);
    }
}
