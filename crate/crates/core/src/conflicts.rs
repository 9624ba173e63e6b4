//! Conflict recognition and classification around each car.
//!
//! Cars are visited in ascending id order so that the first detector of a
//! multi-car conflict is reproducible.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::{segments_intersect, Vec2};
use crate::params::SfmParams;
use crate::scene::{bearing_deg, within_half_angle, AgentId, AgentState, Scene};

/// Angle gate for cars seen by a car, degrees.
pub const CAR_GATE_DEG: f64 = 90.0;
/// Angle gate for pedestrians seen by a car, degrees.
pub const PEDESTRIAN_GATE_DEG: f64 = 113.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictClass {
    PedestriansToCar,
    PedestriansToCars,
    CarToCar,
    NoNewConflict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub anchor_car: AgentId,
    /// Ascending ids; never contains the anchor.
    pub competitive_users: Vec<AgentId>,
    pub class: ConflictClass,
    pub created_at_step: u64,
    pub active: bool,
}

/// `x(t) + S_C · maxSpeed · e`.
pub fn predicted_position(agent: &AgentState, params: &SfmParams) -> Vec2 {
    agent.position + agent.heading * (params.s_c * agent.max_speed)
}

/// Users a car currently competes with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub peds: BTreeSet<AgentId>,
    pub cars: BTreeSet<AgentId>,
}

impl Candidates {
    pub fn is_empty(&self) -> bool {
        self.peds.is_empty() && self.cars.is_empty()
    }
}

/// Read-only view over one step's agents.
pub struct Snapshot<'a> {
    agents: BTreeMap<AgentId, &'a AgentState>,
}

impl<'a> Snapshot<'a> {
    pub fn new(agents: impl IntoIterator<Item = &'a AgentState>) -> Self {
        Snapshot { agents: agents.into_iter().map(|a| (a.id, a)).collect() }
    }

    pub fn get(&self, id: AgentId) -> Option<&'a AgentState> {
        self.agents.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a AgentState> + '_ {
        self.agents.values().copied()
    }

    pub fn cars(&self) -> impl Iterator<Item = &'a AgentState> + '_ {
        self.iter().filter(|a| a.is_car())
    }

    pub fn pedestrians(&self) -> impl Iterator<Item = &'a AgentState> + '_ {
        self.iter().filter(|a| a.is_pedestrian())
    }

    /// Nearest member of `set` to `from`, ties broken by lower id.
    pub fn nearest_of(&self, from: &AgentState, set: impl IntoIterator<Item = AgentId>) -> Option<AgentId> {
        let mut best: Option<(f64, AgentId)> = None;
        for id in set {
            if let Some(a) = self.get(id) {
                let d = from.distance_to(a);
                if best.map_or(true, |(bd, bid)| d < bd || (d == bd && id < bid)) {
                    best = Some((d, id));
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

/// Scans the surroundings of car `i` and returns its competitive users.
pub fn candidate_sets(i: &AgentState, world: &Snapshot<'_>, scene: &Scene, params: &SfmParams) -> Candidates {
    let mut out = Candidates::default();
    if scene.in_intersection_zone(i.position) {
        let pred_i = predicted_position(i, params);
        for j in world.iter() {
            if j.id == i.id
                || i.prior_conflict_partners.contains(&j.id)
                || j.prior_conflict_partners.contains(&i.id)
            {
                continue;
            }
            if i.distance_to(j) > params.view_range {
                continue;
            }
            let theta = bearing_deg(i.position, i.heading, j.position);
            let (gate, d_min) = if j.is_car() {
                (CAR_GATE_DEG, params.d_min_cc)
            } else {
                (PEDESTRIAN_GATE_DEG, params.d_min_pc)
            };
            if !within_half_angle(theta, gate) {
                continue;
            }
            if pred_i.distance(predicted_position(j, params)) <= d_min {
                if j.is_car() {
                    out.cars.insert(j.id);
                } else {
                    out.peds.insert(j.id);
                }
            }
        }
    } else {
        for j in world.pedestrians() {
            if i.prior_conflict_partners.contains(&j.id) {
                continue;
            }
            if i.distance_to(j) > params.view_range {
                continue;
            }
            let theta = bearing_deg(i.position, i.heading, j.position);
            if !within_half_angle(theta, PEDESTRIAN_GATE_DEG) {
                continue;
            }
            let back = j.position - j.heading * j.diameter;
            if segments_intersect(back, j.goal, i.position, i.goal) {
                out.peds.insert(j.id);
            }
        }
    }
    out
}

/// Classification state shared across the cars of one recognition pass.
pub struct Classifier<'s, 'a> {
    pub world: &'s Snapshot<'a>,
    pub scene: &'s Scene,
    pub step: u64,
    /// Pending candidate sets per car; the multi-car merge clears entries.
    pub pending: BTreeMap<AgentId, Candidates>,
}

impl Classifier<'_, '_> {
    fn nearest_competitor(&self, car: &AgentState, c: &Candidates) -> Option<AgentId> {
        self.world.nearest_of(car, c.peds.iter().chain(c.cars.iter()).copied())
    }

    /// Classifies car `u`'s candidate sets. Returns the conflict and the cars
    /// whose own pending conflicts were absorbed by a merge.
    pub fn classify(&mut self, u: &AgentState, peds: &BTreeSet<AgentId>, cars: &BTreeSet<AgentId>) -> (Conflict, Vec<AgentId>) {
        let make = |users: BTreeSet<AgentId>, class| Conflict {
            anchor_car: u.id,
            competitive_users: users.into_iter().filter(|&id| id != u.id).collect(),
            class,
            created_at_step: self.step,
            active: class != ConflictClass::NoNewConflict,
        };
        if !peds.is_empty() && !cars.is_empty() {
            let all = peds.union(cars).copied().collect();
            return (make(all, ConflictClass::PedestriansToCars), Vec::new());
        }
        if peds.is_empty() && !cars.is_empty() {
            return (make(cars.clone(), ConflictClass::CarToCar), Vec::new());
        }
        if self.scene.in_intersection_zone(u.position) && !peds.is_empty() {
            return (make(peds.clone(), ConflictClass::PedestriansToCar), Vec::new());
        }
        if self.scene.in_road_zone(u.position) && !peds.is_empty() {
            let own = Candidates { peds: peds.clone(), cars: cars.clone() };
            let target = self.nearest_competitor(u, &own);
            let mut merged = BTreeSet::new();
            if target.is_some() {
                let others: Vec<AgentId> = self.world.cars().map(|c| c.id).filter(|&id| id != u.id).collect();
                for x in others {
                    let cand = self.pending.get(&x).cloned().unwrap_or_default();
                    let xs = self.world.get(x).expect("car in snapshot");
                    if self.nearest_competitor(xs, &cand) == target {
                        merged.insert(x);
                        self.pending.insert(x, Candidates::default());
                    }
                }
            }
            if !merged.is_empty() {
                let all = peds.union(&merged).copied().collect();
                let absorbed = merged.into_iter().collect();
                return (make(all, ConflictClass::PedestriansToCars), absorbed);
            }
            return (make(peds.clone(), ConflictClass::PedestriansToCar), Vec::new());
        }
        (make(BTreeSet::new(), ConflictClass::NoNewConflict), Vec::new())
    }
}

/// Runs recognition and classification for every car and returns the new
/// conflicts, `NoNewConflict` outcomes omitted.
pub fn recognize_conflicts<'a>(
    agents: impl IntoIterator<Item = &'a AgentState>,
    scene: &Scene,
    params: &SfmParams,
    step: u64,
) -> Vec<Conflict> {
    let world = Snapshot::new(agents);
    let pending: BTreeMap<AgentId, Candidates> = world
        .cars()
        .map(|c| (c.id, candidate_sets(c, &world, scene, params)))
        .collect();
    let mut classifier = Classifier { world: &world, scene, step, pending };
    let mut out: Vec<Conflict> = Vec::new();
    let car_ids: Vec<AgentId> = world.cars().map(|c| c.id).collect();
    for id in car_ids {
        let cand = classifier.pending.get(&id).cloned().unwrap_or_default();
        let u = world.get(id).expect("car in snapshot");
        let (conflict, absorbed) = classifier.classify(u, &cand.peds, &cand.cars);
        if !absorbed.is_empty() {
            out.retain(|c| !absorbed.contains(&c.anchor_car));
        }
        if conflict.class != ConflictClass::NoNewConflict {
            out.push(conflict);
        }
    }
    out
}
