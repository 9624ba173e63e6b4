//! Social force terms and the per-step velocity update.
//!
//! All functions are pure; the engine evaluates them against a frozen
//! snapshot of the world and swaps states once per step.

use crate::geom::Vec2;
use crate::params::SfmParams;
use crate::scene::{AgentKind, AgentState, Scene};

/// Lateral speed below which a pedestrian counts as not crossing, m/s.
pub const CROSSING_SPEED_EPS: f64 = 0.05;

/// Goal-directed relaxation term `(v* − v) / τ`.
///
/// When the agent already sits on its waypoint the desired direction falls
/// back to the current heading.
pub fn driving_force(agent: &AgentState, next_waypoint: Vec2, params: &SfmParams) -> Vec2 {
    let dir = (next_waypoint - agent.position).normalized().unwrap_or(agent.heading);
    (dir * agent.desired_speed - agent.velocity) / params.tau
}

/// Field-of-view weight `λ + (1 − λ)(1 + cos φ)/2`, with φ the angle between
/// `heading` and `to_target`.
pub fn anisotropy_factor(heading: Vec2, to_target: Vec2, lambda: f64) -> f64 {
    let cos_phi = match (heading.normalized(), to_target.normalized()) {
        (Some(e), Some(n)) => e.dot(n).clamp(-1.0, 1.0),
        _ => 1.0,
    };
    lambda + (1.0 - lambda) * (1.0 + cos_phi) / 2.0
}

/// Exponential repulsion exerted by road user `j` on `i`.
///
/// Pedestrian pairs use the PP constants and center distance; any pair
/// involving a car uses the PC constants and measures to the car's disc.
pub fn agent_repulsion(i: &AgentState, j: &AgentState, params: &SfmParams) -> Vec2 {
    let both_peds = i.is_pedestrian() && j.is_pedestrian();
    let (strength, range) = if both_peds {
        (params.v_pp, params.sigma_pp)
    } else {
        (params.v_pc, params.sigma_pc)
    };
    let offset = i.position - j.position;
    let center = offset.norm();
    let disc = if j.kind == AgentKind::Car { j.diameter / 2.0 } else { 0.0 };
    let (d, n_hat) = match offset.normalized() {
        Some(n) => ((center - disc).max(0.0), n),
        None => (0.0, i.heading.left_normal()),
    };
    let f = anisotropy_factor(i.heading, j.position - i.position, params.lambda);
    n_hat * (strength * libm::exp(-d / range) * f)
}

/// Summed repulsion from every obstacle polygon, measured from the nearest
/// boundary point.
pub fn obstacle_repulsion(i: &AgentState, scene: &Scene, params: &SfmParams) -> Vec2 {
    let mut total = Vec2::ZERO;
    for obstacle in &scene.obstacles {
        let (nearest, edge) = obstacle.nearest_boundary_point(i.position);
        let inside = obstacle.contains_strictly(i.position);
        let offset = i.position - nearest;
        let (d, n_hat) = match (inside, offset.normalized()) {
            (false, Some(n)) => (offset.norm(), n),
            _ => (0.0, obstacle.outward_normal(edge)),
        };
        total += n_hat * (params.u_obstacle * libm::exp(-d / params.obstacle_range));
    }
    total
}

/// Outcome of the car-following rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FollowDirective {
    /// Keep moving along this unit direction.
    Steer(Vec2),
    Decelerate,
}

/// Car-following: steer toward `x_i + v̂_leader · D_min` while the gap is at
/// least `D_min`, otherwise decelerate.
pub fn car_following_force(i: &AgentState, leader: &AgentState, params: &SfmParams) -> FollowDirective {
    let gap = i.distance_to(leader);
    if gap >= params.d_min_cc {
        let v_hat = leader.velocity.normalized().unwrap_or(leader.heading);
        let target = i.position + v_hat * params.d_min_cc;
        FollowDirective::Steer((target - i.position).normalized().unwrap_or(i.heading))
    } else {
        FollowDirective::Decelerate
    }
}

/// Whether `ped` stands in the car's frontal corridor (length `D_min`, width
/// car plus pedestrian diameter) with a velocity component across the lane.
pub fn pedestrian_in_corridor(car: &AgentState, ped: &AgentState, params: &SfmParams) -> bool {
    let rel = ped.position - car.position;
    let along = rel.dot(car.heading);
    let lateral = rel.dot(car.heading.left_normal());
    let half_width = (car.diameter + ped.diameter) / 2.0;
    let crossing = ped.velocity.dot(car.heading.left_normal()).abs() > CROSSING_SPEED_EPS;
    along >= 0.0 && along <= params.d_min_pc && lateral.abs() <= half_width && crossing
}

/// True iff some pedestrian has already started crossing in front of `car`.
pub fn reactive_stopping<'a>(
    car: &AgentState,
    pedestrians: impl IntoIterator<Item = &'a AgentState>,
    params: &SfmParams,
) -> bool {
    pedestrians
        .into_iter()
        .any(|p| p.is_pedestrian() && pedestrian_in_corridor(car, p, params))
}

/// The single governing instruction for one agent during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    /// Euler step with this acceleration, m/s².
    Accelerate(Vec2),
    /// Keep the heading and move at this speed.
    SetSpeed(f64),
}

/// Advances one agent by `dt` seconds under `directive`.
///
/// Speed is clamped to `max_speed` before the position update; the heading
/// follows the velocity whenever the agent moves.
pub fn integrate_step(agent: &AgentState, directive: &Directive, dt: f64) -> AgentState {
    let mut next = agent.clone();
    let mut v = match *directive {
        Directive::Accelerate(a) => agent.velocity + a * dt,
        Directive::SetSpeed(s) => agent.heading * s.max(0.0),
    };
    let speed = v.norm();
    if speed > agent.max_speed {
        v = v * (agent.max_speed / speed);
    }
    if !v.is_finite() {
        v = Vec2::ZERO;
    }
    next.velocity = v;
    next.position = agent.position + v * dt;
    if let Some(e) = v.normalized() {
        next.heading = e;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Polygon, Rect};
    use crate::scene::AgentId;

    fn ped(id: u32, x: f64, y: f64) -> AgentState {
        AgentState::new(AgentId(id), AgentKind::Pedestrian, Vec2::new(x, y), Vec2::new(100.0, y), 1.34)
    }

    fn car(id: u32, x: f64, y: f64) -> AgentState {
        AgentState::new(AgentId(id), AgentKind::Car, Vec2::new(x, y), Vec2::new(100.0, y), 5.0)
    }

    #[test]
    fn driving_force_cases() {
        let p = SfmParams::default();
        let a = ped(1, 0.0, 0.0);
        let f = driving_force(&a, Vec2::new(10.0, 0.0), &p);
        assert!((f.x - 2.68).abs() < 1e-12 && f.y == 0.0);
        let moving = a.clone().with_velocity(Vec2::new(1.34, 0.0));
        assert_eq!(driving_force(&moving, Vec2::new(10.0, 0.0), &p), Vec2::ZERO);
        let mut still = moving.clone();
        still.desired_speed = 0.0;
        let f = driving_force(&still, Vec2::new(10.0, 0.0), &p);
        assert_eq!(f, Vec2::new(-1.34 / 0.5, 0.0));
        // at the waypoint: heading is used
        let f = driving_force(&a, Vec2::ZERO, &p);
        assert!((f.x - 2.68).abs() < 1e-12);
    }

    #[test]
    fn anisotropy_values() {
        let e = Vec2::new(1.0, 0.0);
        assert_eq!(anisotropy_factor(e, Vec2::new(1.0, 0.0), 0.2), 1.0);
        assert_eq!(anisotropy_factor(e, Vec2::new(-1.0, 0.0), 0.2), 0.2);
        assert!((anisotropy_factor(e, Vec2::new(0.0, 1.0), 0.2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ped_pair_repulsion() {
        let p = SfmParams::default();
        let i = ped(1, 0.0, 0.0);
        let j = ped(2, 0.4, 0.0);
        let f = agent_repulsion(&i, &j, &p);
        assert!((f.norm() - 1.4 * libm::exp(-1.0)).abs() < 1e-12);
        assert!(f.x < 0.0);
        let far = ped(3, 4.0, 0.0);
        assert!(agent_repulsion(&i, &far, &p).norm() < 1e-3 * p.v_pp);
        let behind = ped(4, -0.4, 0.0);
        let ratio = agent_repulsion(&i, &behind, &p).norm() / f.norm();
        assert!((ratio - 0.2).abs() < 1e-12);
    }

    #[test]
    fn coincident_agents_push_sideways() {
        let p = SfmParams::default();
        let i = ped(1, 0.0, 0.0);
        let j = ped(2, 0.0, 0.0);
        let f = agent_repulsion(&i, &j, &p);
        assert!(f.x.abs() < 1e-15);
        assert!((f.y - 1.4).abs() < 1e-12);
    }

    #[test]
    fn car_disc_distance() {
        let p = SfmParams::default();
        let i = ped(1, 0.0, 0.0);
        let c = car(2, 1.2, 0.0);
        let f = agent_repulsion(&i, &c, &p);
        assert!((f.norm() - 10.0 * libm::exp(-0.2 / 0.2)).abs() < 1e-12);
    }

    #[test]
    fn wall_repulsion() {
        let p = SfmParams::default();
        let b = Rect::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0));
        let wall = Polygon::rect(Vec2::new(-5.0, 0.2), Vec2::new(5.0, 1.0));
        let s = Scene::new(alloc::vec![wall], alloc::vec![], alloc::vec![], b, 1.0).unwrap();
        let f = obstacle_repulsion(&ped(1, 0.0, 0.0), &s, &p);
        assert!((f.norm() - 10.0 * libm::exp(-1.0)).abs() < 1e-12);
        assert!(f.y < 0.0);
        assert_eq!(obstacle_repulsion(&ped(1, 0.0, 0.0), &Scene::empty(b), &p), Vec2::ZERO);
        // inside: full strength along the nearest edge's outward normal
        let f = obstacle_repulsion(&ped(1, 0.0, 0.3), &s, &p);
        assert!((f.norm() - 10.0).abs() < 1e-12 && f.y < 0.0);
    }

    #[test]
    fn parallel_walls_cancel() {
        let p = SfmParams::default();
        let b = Rect::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0));
        let top = Polygon::rect(Vec2::new(-5.0, 0.7), Vec2::new(5.0, 1.5));
        let bottom = Polygon::rect(Vec2::new(-5.0, -1.5), Vec2::new(5.0, -0.7));
        let s = Scene::new(alloc::vec![top, bottom], alloc::vec![], alloc::vec![], b, 1.0).unwrap();
        let f = obstacle_repulsion(&ped(1, 0.0, 0.0), &s, &p);
        assert!(f.y.abs() < 1e-12 && f.x.abs() < 1e-12);
    }

    #[test]
    fn following_threshold() {
        let p = SfmParams::default();
        let i = car(1, 0.0, 0.0);
        let lead = |x| car(2, x, 0.0).with_velocity(Vec2::new(3.0, 0.0));
        assert_eq!(car_following_force(&i, &lead(12.0), &p), FollowDirective::Steer(Vec2::new(1.0, 0.0)));
        assert_eq!(car_following_force(&i, &lead(8.0), &p), FollowDirective::Steer(Vec2::new(1.0, 0.0)));
        assert_eq!(car_following_force(&i, &lead(5.0), &p), FollowDirective::Decelerate);
        // stationary leader: its heading is used
        let parked = car(2, 20.0, 0.0).with_heading(Vec2::new(0.0, 1.0));
        assert_eq!(car_following_force(&i, &parked, &p), FollowDirective::Steer(Vec2::new(0.0, 1.0)));
    }

    #[test]
    fn stopping_corridor() {
        let p = SfmParams::default();
        let c = car(1, 0.0, 0.0).with_velocity(Vec2::new(4.0, 0.0));
        let crossing = ped(2, 3.0, -0.5).with_velocity(Vec2::new(0.0, 1.3));
        assert!(reactive_stopping(&c, [&crossing], &p));
        let behind = ped(3, -3.0, 0.0).with_velocity(Vec2::new(0.0, 1.3));
        assert!(!reactive_stopping(&c, [&behind], &p));
        let parallel = ped(4, 3.0, 0.0).with_velocity(Vec2::new(1.3, 0.0));
        assert!(!reactive_stopping(&c, [&parallel], &p));
    }

    #[test]
    fn euler_step() {
        let p = SfmParams::default();
        let a = ped(1, 0.0, 0.0).with_velocity(Vec2::new(1.34, 0.0));
        let f = driving_force(&a, Vec2::new(10.0, 0.0), &p);
        let n = integrate_step(&a, &Directive::Accelerate(f), 0.5);
        assert_eq!(n.velocity, a.velocity);
        assert!((n.position.x - 0.67).abs() < 1e-15);

        let rest = ped(1, 0.0, 0.0);
        let f = driving_force(&rest, Vec2::new(10.0, 0.0), &p);
        let n = integrate_step(&rest, &Directive::Accelerate(f), 0.5);
        assert!((n.velocity.x - 1.34).abs() < 1e-15);

        let fast = integrate_step(&rest, &Directive::Accelerate(Vec2::new(2.0 * 1.2 * 2.0, 0.0)), 0.5);
        assert!((fast.speed() - rest.max_speed).abs() < 1e-12);
    }
}
