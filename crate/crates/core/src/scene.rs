//! Road users and the static world they move through.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Polygon, Rect, Vec2};

/// Tolerance on angle gates, in degrees. Gates are boundary inclusive.
pub const ANGLE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[serde(alias = "ped")]
    Pedestrian,
    Car,
}

impl AgentKind {
    pub fn short_name(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "ped",
            AgentKind::Car => "car",
        }
    }

    pub fn default_max_speed(self) -> f64 {
        match self {
            AgentKind::Pedestrian => 2.0,
            AgentKind::Car => 8.0,
        }
    }

    pub fn default_diameter(self) -> f64 {
        match self {
            AgentKind::Pedestrian => 0.5,
            AgentKind::Car => 2.0,
        }
    }
}

/// Kinematic and bookkeeping state of one road user.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    /// m/s
    pub velocity: Vec2,
    pub desired_speed: f64,
    pub max_speed: f64,
    /// Final destination.
    pub goal: Vec2,
    /// Remaining waypoints, the last one being `goal`.
    pub waypoints: Vec<Vec2>,
    /// Unit direction of motion; retained while the agent stands still.
    pub heading: Vec2,
    pub diameter: f64,
    /// Number of times this car has given way.
    pub giveway_count: u32,
    /// Number of active conflicts this agent takes part in.
    pub active_interactions: u32,
    /// Users this car is currently decelerating for.
    pub stopping_for: BTreeSet<AgentId>,
    pub following: Option<AgentId>,
    pub followed_by: Option<AgentId>,
    /// Competitive users from detected conflicts that are still active.
    pub prior_conflict_partners: BTreeSet<AgentId>,
}

impl AgentState {
    /// A fresh agent heading toward `goal` with kind defaults for speed
    /// limit and diameter.
    pub fn new(id: AgentId, kind: AgentKind, position: Vec2, goal: Vec2, desired_speed: f64) -> Self {
        let heading = (goal - position).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        AgentState {
            id,
            kind,
            position,
            velocity: Vec2::ZERO,
            desired_speed,
            max_speed: kind.default_max_speed(),
            goal,
            waypoints: alloc::vec![goal],
            heading,
            diameter: kind.default_diameter(),
            giveway_count: 0,
            active_interactions: 0,
            stopping_for: BTreeSet::new(),
            following: None,
            followed_by: None,
            prior_conflict_partners: BTreeSet::new(),
        }
    }

    pub fn with_velocity(mut self, velocity: Vec2) -> Self {
        self.velocity = velocity;
        if let Some(e) = velocity.normalized() {
            self.heading = e;
        }
        self
    }

    pub fn with_heading(mut self, heading: Vec2) -> Self {
        self.heading = heading.normalized().unwrap_or(self.heading);
        self
    }

    pub fn with_max_speed(mut self, max_speed: f64) -> Self {
        self.max_speed = max_speed;
        self
    }

    pub fn with_diameter(mut self, diameter: f64) -> Self {
        self.diameter = diameter;
        self
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn is_car(&self) -> bool {
        self.kind == AgentKind::Car
    }

    pub fn is_pedestrian(&self) -> bool {
        self.kind == AgentKind::Pedestrian
    }

    pub fn next_waypoint(&self) -> Vec2 {
        self.waypoints.first().copied().unwrap_or(self.goal)
    }

    pub fn distance_to(&self, other: &AgentState) -> f64 {
        self.position.distance(other.position)
    }

    /// Checks the state invariants: finite vectors, unit heading, positive
    /// diameter and a speed within the limit.
    pub fn validate(&self) -> Result<()> {
        if !(self.position.is_finite() && self.velocity.is_finite() && self.goal.is_finite()) {
            return Err(Error::InvalidArgument(format!("agent {}: non-finite state", self.id)));
        }
        if !(self.diameter > 0.0) {
            return Err(Error::InvalidArgument(format!("agent {}: diameter must be positive", self.id)));
        }
        if !(self.max_speed > 0.0) || !(self.desired_speed >= 0.0) {
            return Err(Error::InvalidArgument(format!("agent {}: invalid speed limits", self.id)));
        }
        if self.speed() > self.max_speed * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!("agent {}: speed exceeds max_speed", self.id)));
        }
        if (self.heading.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("agent {}: heading is not a unit vector", self.id)));
        }
        Ok(())
    }
}

/// Static world description. Coordinates are meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub obstacles: Vec<Polygon>,
    pub intersection_zones: Vec<Polygon>,
    pub road_zones: Vec<Polygon>,
    pub bounds: Rect,
    pub meters_per_unit: f64,
}

impl Scene {
    /// Validates polygons, zone containment and the unit scale.
    pub fn new(
        obstacles: Vec<Polygon>,
        intersection_zones: Vec<Polygon>,
        road_zones: Vec<Polygon>,
        bounds: Rect,
        meters_per_unit: f64,
    ) -> Result<Self> {
        if !(meters_per_unit > 0.0 && meters_per_unit.is_finite()) {
            return Err(Error::InvalidScene("meters_per_unit must be positive".into()));
        }
        if !bounds.is_valid() {
            return Err(Error::InvalidScene("bounds must have min < max".into()));
        }
        for (label, set) in [
            ("obstacle", &obstacles),
            ("intersection zone", &intersection_zones),
            ("road zone", &road_zones),
        ] {
            for (i, p) in set.iter().enumerate() {
                if p.vertices().len() < 3 {
                    return Err(Error::InvalidScene(format!("{label} {i} has fewer than 3 vertices")));
                }
                if !p.is_simple() {
                    return Err(Error::InvalidScene(format!("{label} {i} is self-intersecting")));
                }
            }
        }
        for (label, set) in [("intersection zone", &intersection_zones), ("road zone", &road_zones)] {
            for (i, p) in set.iter().enumerate() {
                if !p.vertices().iter().all(|v| bounds.contains(*v)) {
                    return Err(Error::InvalidScene(format!("{label} {i} leaves the scene bounds")));
                }
            }
        }
        Ok(Scene { obstacles, intersection_zones, road_zones, bounds, meters_per_unit })
    }

    /// Obstacle-free scene spanning `bounds`.
    pub fn empty(bounds: Rect) -> Self {
        Scene {
            obstacles: Vec::new(),
            intersection_zones: Vec::new(),
            road_zones: Vec::new(),
            bounds,
            meters_per_unit: 1.0,
        }
    }

    pub fn in_intersection_zone(&self, p: Vec2) -> bool {
        self.intersection_zones.iter().any(|z| z.contains(p))
    }

    pub fn in_road_zone(&self, p: Vec2) -> bool {
        self.road_zones.iter().any(|z| z.contains(p))
    }

    pub fn inside_obstacle(&self, p: Vec2) -> bool {
        self.obstacles.iter().any(|o| o.contains_strictly(p))
    }

    /// True iff the segment crosses no obstacle interior.
    pub fn segment_is_free(&self, a: Vec2, b: Vec2) -> bool {
        !self.obstacles.iter().any(|o| o.segment_enters_interior(a, b))
    }
}

/// Angle from `heading` to the direction `observer → target`, degrees in `[0, 360)`.
pub fn bearing_deg(position: Vec2, heading: Vec2, target: Vec2) -> f64 {
    heading.angle_to_deg(target - position)
}

/// `θ ≤ half` or `θ ≥ 360 − half`, inclusive.
pub fn within_half_angle(theta_deg: f64, half_angle_deg: f64) -> bool {
    theta_deg <= half_angle_deg + ANGLE_EPS_DEG || theta_deg >= 360.0 - half_angle_deg - ANGLE_EPS_DEG
}

/// True iff `target` is within `range` of the observer and inside the
/// symmetric field of view of half-angle `half_angle_deg` around its heading.
/// A target at the observer's own position is always visible.
pub fn in_field_of_view(observer: &AgentState, target: Vec2, half_angle_deg: f64, range: f64) -> bool {
    let d = observer.position.distance(target);
    if d > range {
        return false;
    }
    if d == 0.0 {
        return true;
    }
    within_half_angle(bearing_deg(observer.position, observer.heading, target), half_angle_deg)
}
