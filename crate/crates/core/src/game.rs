//! Stackelberg games for complex conflicts.
//!
//! Payoffs are built as an ordinal base value per action plus a signed,
//! weighted sum of observable situation features. The signs follow the
//! direction each feature pushes the odds of yielding (decelerating or
//! deviating) relative to continuing; a large penalty is charged to both
//! sides of every leader-follower pair that continues simultaneously.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{segments_intersect, Vec2};
use crate::params::{GameParams, Regime, SfmParams};
use crate::scene::{AgentId, AgentKind, AgentState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    #[serde(alias = "accelerate")]
    Continue,
    Decelerate,
    Deviate,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Continue, Action::Decelerate, Action::Deviate];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Continue => "continue",
            Action::Decelerate => "decelerate",
            Action::Deviate => "deviate",
        }
    }

    /// Tie-break rank: lower wins. Progress is preferred.
    pub fn preference_rank(self) -> u8 {
        match self {
            Action::Continue => 0,
            Action::Deviate => 1,
            Action::Decelerate => 2,
        }
    }

    /// Strategy set of an agent kind.
    pub fn available_to(kind: AgentKind) -> &'static [Action] {
        match kind {
            AgentKind::Pedestrian => &[Action::Continue, Action::Decelerate, Action::Deviate],
            AgentKind::Car => &[Action::Continue, Action::Decelerate],
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continue" | "accelerate" => Ok(Action::Continue),
            "decelerate" => Ok(Action::Decelerate),
            "deviate" => Ok(Action::Deviate),
            other => Err(Error::InvalidArgument(alloc::format!("unknown action '{other}'"))),
        }
    }
}

/// Observable situation features of one road user `α` facing `β`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub own_speed: f64,
    pub competitor_speed: f64,
    pub noai: f64,
    pub car_stopped: f64,
    pub car_following: f64,
    pub angle: f64,
    pub car_followed: f64,
    pub min_dist: f64,
    pub giveway_nr: f64,
    pub pedestrian_min_dist: f64,
    pub car_min_dist: f64,
}

/// Feature identifiers, named as in the reference logit models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    OwnSpeed,
    CompetitorSpeed,
    Noai,
    CarStopped,
    CarFollowing,
    Angle,
    CarFollowed,
    MinDist,
    GivewayNr,
    PedestrianMinDist,
    CarMinDist,
}

impl Feature {
    pub const ALL: [Feature; 11] = [
        Feature::OwnSpeed,
        Feature::CompetitorSpeed,
        Feature::Noai,
        Feature::CarStopped,
        Feature::CarFollowing,
        Feature::Angle,
        Feature::CarFollowed,
        Feature::MinDist,
        Feature::GivewayNr,
        Feature::PedestrianMinDist,
        Feature::CarMinDist,
    ];

    /// Candidate features of the car decision model.
    pub const CAR_MODEL: [Feature; 8] = [
        Feature::OwnSpeed,
        Feature::CompetitorSpeed,
        Feature::Noai,
        Feature::CarStopped,
        Feature::Angle,
        Feature::CarFollowing,
        Feature::MinDist,
        Feature::GivewayNr,
    ];

    /// Candidate features of the pedestrian decision model.
    pub const PEDESTRIAN_MODEL: [Feature; 5] = [
        Feature::OwnSpeed,
        Feature::CompetitorSpeed,
        Feature::CarStopped,
        Feature::Angle,
        Feature::CarFollowed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::OwnSpeed => "OwnSpeed",
            Feature::CompetitorSpeed => "CompetitorSpeed",
            Feature::Noai => "NOAI",
            Feature::CarStopped => "CarStopped",
            Feature::CarFollowing => "CarFollowing",
            Feature::Angle => "Angle",
            Feature::CarFollowed => "CarFollowed",
            Feature::MinDist => "MinDist",
            Feature::GivewayNr => "GivewayNr",
            Feature::PedestrianMinDist => "PedestrianMinDist",
            Feature::CarMinDist => "CarMinDist",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(name.trim()))
    }
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::OwnSpeed => self.own_speed,
            Feature::CompetitorSpeed => self.competitor_speed,
            Feature::Noai => self.noai,
            Feature::CarStopped => self.car_stopped,
            Feature::CarFollowing => self.car_following,
            Feature::Angle => self.angle,
            Feature::CarFollowed => self.car_followed,
            Feature::MinDist => self.min_dist,
            Feature::GivewayNr => self.giveway_nr,
            Feature::PedestrianMinDist => self.pedestrian_min_dist,
            Feature::CarMinDist => self.car_min_dist,
        }
    }
}

/// Buckets the angle between the competitor's heading and the direction from
/// the competitor to the subject: 8 head-on down to 1 for anything beyond 90°.
pub fn angle_bucket(theta_deg: f64) -> u8 {
    let t = theta_deg;
    if (0.0..16.0).contains(&t) || t > 344.0 {
        8
    } else if (16.0..=42.0).contains(&t) || (318.0..=344.0).contains(&t) {
        7
    } else if (t > 42.0 && t <= 65.0) || (295.0..318.0).contains(&t) {
        6
    } else if (t > 65.0 && t <= 90.0) || (270.0..295.0).contains(&t) {
        5
    } else {
        1
    }
}

fn critical_distance(a: &AgentState, b: &AgentState, params: &SfmParams) -> f64 {
    if a.is_car() && b.is_car() {
        params.d_min_cc
    } else {
        params.d_min_pc
    }
}

/// Computes the features of `subject` (α) facing `competitor` (β).
///
/// Car-only features are zero for pedestrian subjects, except that
/// `car_stopped` and `car_followed` then describe the competing car.
pub fn extract_features(
    subject: &AgentState,
    competitor: &AgentState,
    params: &SfmParams,
    gp: &GameParams,
) -> FeatureVector {
    let speed = subject.speed();
    let distance = subject.distance_to(competitor);
    let manhattan = subject.position.manhattan(competitor.position);
    let d_min = critical_distance(subject, competitor, params);
    let theta = competitor.heading.angle_to_deg(subject.position - competitor.position);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };

    let mut fv = FeatureVector {
        own_speed: match subject.kind {
            AgentKind::Car => speed,
            AgentKind::Pedestrian => flag(speed > gp.s_high),
        },
        competitor_speed: flag(competitor.speed() < gp.s_normal),
        angle: f64::from(angle_bucket(theta)),
        min_dist: if distance < d_min { d_min - distance } else { 0.0 },
        ..FeatureVector::default()
    };
    match subject.kind {
        AgentKind::Car => {
            fv.noai = f64::from(subject.active_interactions);
            fv.car_stopped = flag(subject.stopping_for.iter().any(|&id| id != competitor.id));
            fv.car_following = flag(subject.following.is_some());
            fv.car_followed = flag(subject.followed_by.is_some());
            fv.giveway_nr = f64::from(subject.giveway_count);
        }
        AgentKind::Pedestrian => {
            if competitor.is_car() {
                fv.car_stopped = flag(!competitor.stopping_for.is_empty());
                fv.car_followed = flag(competitor.followed_by.is_some());
            }
        }
    }
    fv.pedestrian_min_dist = if manhattan < d_min && distance - manhattan <= gp.m { distance } else { 0.0 };
    let walker = if subject.is_pedestrian() {
        Some(subject)
    } else if competitor.is_pedestrian() {
        Some(competitor)
    } else {
        None
    };
    fv.car_min_dist = match walker {
        Some(w) if manhattan < gp.n && w.speed() > gp.s_high => manhattan,
        _ => 0.0,
    };
    fv
}

/// Sign and weight of every feature's contribution to `action`'s utility for
/// an agent of `kind`, relative to Continue.
pub fn feature_weights(kind: AgentKind, action: Action, gp: &GameParams, regime: Regime) -> Vec<(Feature, f64)> {
    use Feature::*;
    let dut = regime == Regime::Dut;
    let mut w = Vec::new();
    match (kind, action) {
        (_, Action::Continue) => {}
        (AgentKind::Car, Action::Decelerate) => {
            w.push((OwnSpeed, -gp.g_own_speed));
            w.push((CompetitorSpeed, gp.g_competitor_speed));
            w.push((Noai, gp.g_noai));
            w.push((CarStopped, if dut { -gp.g_stopped } else { gp.g_stopped }));
            w.push((Angle, gp.g_angle));
            w.push((CarFollowing, gp.g_following));
            w.push((GivewayNr, -gp.g_giveway));
            if dut {
                w.push((CarMinDist, gp.g_distance));
            } else {
                w.push((MinDist, -gp.g_distance));
            }
        }
        (AgentKind::Car, Action::Deviate) => {}
        (AgentKind::Pedestrian, Action::Decelerate) => {
            w.push((OwnSpeed, gp.g_own_speed));
            w.push((CompetitorSpeed, -gp.g_competitor_speed));
            w.push((CarStopped, -gp.g_stopped));
            w.push((Angle, gp.g_angle));
            w.push((CarFollowed, gp.g_followed));
            if dut {
                w.push((PedestrianMinDist, gp.g_distance));
            }
        }
        (AgentKind::Pedestrian, Action::Deviate) => {
            w.push((OwnSpeed, gp.g_own_speed));
            w.push((CompetitorSpeed, -gp.g_competitor_speed));
            w.push((Angle, gp.g_angle));
            w.push((CarFollowed, -gp.g_followed));
            if dut {
                w.push((PedestrianMinDist, gp.g_distance));
            }
        }
    }
    w
}

/// Utility of `action` before collision penalties.
pub fn action_utility(kind: AgentKind, action: Action, fv: &FeatureVector, gp: &GameParams, regime: Regime) -> f64 {
    let base = match action {
        Action::Continue => gp.base_continue,
        Action::Deviate => gp.base_deviate,
        Action::Decelerate => gp.base_decelerate,
    };
    base + feature_weights(kind, action, gp, regime)
        .into_iter()
        .map(|(f, w)| w * fv.get(f))
        .sum::<f64>()
}

/// A one-leader, many-follower game. Follower payoffs depend on the leader's
/// action and their own; the leader's payoff depends on the full profile.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffGame {
    pub leader: AgentId,
    pub followers: Vec<AgentId>,
    leader_actions: Vec<Action>,
    follower_actions: Vec<Vec<Action>>,
    /// Row-major over (leader, follower 0, follower 1, ...).
    leader_table: Vec<f64>,
    /// Per follower, row-major over (leader, own).
    follower_tables: Vec<Vec<f64>>,
}

impl PayoffGame {
    /// Tabulates a game from payoff functions over action indices.
    pub fn from_fn(
        leader: AgentId,
        followers: Vec<AgentId>,
        leader_actions: Vec<Action>,
        follower_actions: Vec<Vec<Action>>,
        mut leader_payoff: impl FnMut(usize, &[usize]) -> f64,
        mut follower_payoff: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        if followers.is_empty() || followers.len() != follower_actions.len() {
            return Err(Error::InvalidArgument("a game needs at least one follower with a strategy set".into()));
        }
        if leader_actions.is_empty() || follower_actions.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty strategy set".into()));
        }
        let mut game = PayoffGame {
            leader,
            followers,
            leader_actions,
            follower_actions,
            leader_table: Vec::new(),
            follower_tables: Vec::new(),
        };
        let profiles = game.profile_count();
        let mut profile = alloc::vec![0usize; game.followers.len()];
        for l in 0..game.leader_actions.len() {
            for idx in 0..profiles {
                game.decode_profile(idx, &mut profile);
                game.leader_table.push(leader_payoff(l, &profile));
            }
        }
        for k in 0..game.followers.len() {
            let mut t = Vec::new();
            for l in 0..game.leader_actions.len() {
                for a in 0..game.follower_actions[k].len() {
                    t.push(follower_payoff(k, l, a));
                }
            }
            game.follower_tables.push(t);
        }
        Ok(game)
    }

    pub fn leader_actions(&self) -> &[Action] {
        &self.leader_actions
    }

    pub fn follower_actions(&self, k: usize) -> &[Action] {
        &self.follower_actions[k]
    }

    pub fn follower_count(&self) -> usize {
        self.followers.len()
    }

    /// Number of follower action profiles.
    pub fn profile_count(&self) -> usize {
        self.follower_actions.iter().map(Vec::len).product()
    }

    /// Mixed-radix decoding, first follower most significant.
    pub fn decode_profile(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.follower_actions.len()).rev() {
            let n = self.follower_actions[k].len();
            out[k] = idx % n;
            idx /= n;
        }
    }

    fn encode_profile(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.follower_actions)
            .fold(0, |acc, (&a, set)| acc * set.len() + a)
    }

    pub fn leader_utility(&self, l: usize, profile: &[usize]) -> f64 {
        self.leader_table[l * self.profile_count() + self.encode_profile(profile)]
    }

    pub fn follower_utility(&self, k: usize, l: usize, a: usize) -> f64 {
        self.follower_tables[k][l * self.follower_actions[k].len() + a]
    }

    /// Payoffs of every player, leader first.
    pub fn payoffs(&self, l: usize, profile: &[usize]) -> Vec<f64> {
        let mut out = alloc::vec![self.leader_utility(l, profile)];
        out.extend(profile.iter().enumerate().map(|(k, &a)| self.follower_utility(k, l, a)));
        out
    }

    pub fn index_of_leader_action(&self, a: Action) -> Option<usize> {
        self.leader_actions.iter().position(|&x| x == a)
    }
}

/// Picks the index maximizing `value`; exact ties go to the action with the
/// lowest preference rank.
pub fn argmax_by_preference(actions: &[Action], value: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = value(0);
    for i in 1..actions.len() {
        let v = value(i);
        if v > best_v || (v == best_v && actions[i].preference_rank() < actions[best].preference_rank()) {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Best-response indices of every follower to leader action index `l`.
pub fn follower_best_response_indices(game: &PayoffGame, l: usize) -> Vec<usize> {
    (0..game.follower_count())
        .map(|k| argmax_by_preference(game.follower_actions(k), |a| game.follower_utility(k, l, a)))
        .collect()
}

/// Each follower's best reply to `leader_action`.
pub fn follower_best_response(game: &PayoffGame, leader_action: Action) -> Result<Vec<Action>> {
    let l = game
        .index_of_leader_action(leader_action)
        .ok_or(Error::IllegalAction { agent: game.leader, action: leader_action.as_str() })?;
    Ok(follower_best_response_indices(game, l)
        .into_iter()
        .enumerate()
        .map(|(k, a)| game.follower_actions(k)[a])
        .collect())
}

/// Subgame-perfect equilibrium outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub leader_action: Action,
    pub follower_actions: Vec<Action>,
    pub leader_index: usize,
    pub follower_indices: Vec<usize>,
    pub leader_utility: f64,
}

/// Leader commits to the action maximizing its payoff against the
/// followers' best responses.
pub fn solve_spne(game: &PayoffGame) -> Equilibrium {
    let responses: Vec<Vec<usize>> = (0..game.leader_actions().len())
        .map(|l| follower_best_response_indices(game, l))
        .collect();
    let l = argmax_by_preference(game.leader_actions(), |l| game.leader_utility(l, &responses[l]));
    let follower_indices = responses[l].clone();
    Equilibrium {
        leader_action: game.leader_actions()[l],
        follower_actions: follower_indices
            .iter()
            .enumerate()
            .map(|(k, &a)| game.follower_actions(k)[a])
            .collect(),
        leader_utility: game.leader_utility(l, &follower_indices),
        leader_index: l,
        follower_indices,
    }
}

/// Builds the payoff game of one conflict. `leader_features` are the leader's
/// features facing its nearest follower; `follower_features[k]` are follower
/// `k`'s features facing the leader.
pub fn build_payoff_matrix(
    leader: &AgentState,
    followers: &[&AgentState],
    leader_features: &FeatureVector,
    follower_features: &[FeatureVector],
    gp: &GameParams,
    regime: Regime,
) -> Result<PayoffGame> {
    if followers.len() != follower_features.len() {
        return Err(Error::InvalidArgument("one feature vector per follower required".into()));
    }
    let leader_actions = Action::available_to(leader.kind).to_vec();
    let follower_actions: Vec<Vec<Action>> = followers.iter().map(|f| Action::available_to(f.kind).to_vec()).collect();
    let leader_base: Vec<f64> = leader_actions
        .iter()
        .map(|&a| action_utility(leader.kind, a, leader_features, gp, regime))
        .collect();
    let follower_base: Vec<Vec<f64>> = followers
        .iter()
        .zip(follower_features)
        .zip(&follower_actions)
        .map(|((f, fv), set)| set.iter().map(|&a| action_utility(f.kind, a, fv, gp, regime)).collect())
        .collect();
    let la = leader_actions.clone();
    let fa = follower_actions.clone();
    let la2 = leader_actions.clone();
    let fa2 = follower_actions.clone();
    PayoffGame::from_fn(
        leader.id,
        followers.iter().map(|f| f.id).collect(),
        leader_actions,
        follower_actions,
        |l, profile| {
            let clashes = profile
                .iter()
                .enumerate()
                .filter(|&(k, &a)| la[l] == Action::Continue && fa[k][a] == Action::Continue)
                .count();
            leader_base[l] + gp.collision_penalty * clashes as f64
        },
        |k, l, a| {
            let clash = la2[l] == Action::Continue && fa2[k][a] == Action::Continue;
            follower_base[k][a] + if clash { gp.collision_penalty } else { 0.0 }
        },
    )
}

/// Car speed reduction for one step of Decelerate.
pub fn car_deceleration_rate(speed: f64, distance: f64, d_min: f64) -> f64 {
    if distance <= d_min {
        speed / 2.0
    } else {
        speed * speed / (distance - d_min)
    }
}

/// Movement instruction derived from a latched game action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionDirective {
    /// Continue along the planned route.
    FreeFlow,
    /// Walk toward this point instead of the next waypoint.
    SeekPoint(Vec2),
    /// Keep heading at this speed.
    SetSpeed(f64),
}

/// Crossing point in front of `car` if the pedestrian's goal line crosses the
/// car's frontal segment.
pub fn continue_crossing_point(ped: &AgentState, car: &AgentState, params: &SfmParams) -> Option<Vec2> {
    let front = car.position + car.heading * params.s_a;
    let rear = car.position - car.heading * (params.s_a / 2.0);
    segments_intersect(ped.position, ped.goal, front, rear).then_some(front)
}

/// Point behind `car` a deviating pedestrian walks to.
pub fn deviation_point(car: &AgentState, params: &SfmParams) -> Vec2 {
    car.position - car.heading * params.s_a
}

/// Translates `action` into this step's movement for `agent` facing `partner`.
pub fn apply_action(agent: &AgentState, action: Action, partner: &AgentState, params: &SfmParams) -> Result<ActionDirective> {
    match (agent.kind, action) {
        (AgentKind::Car, Action::Continue) => Ok(ActionDirective::FreeFlow),
        (AgentKind::Pedestrian, Action::Continue) => Ok(continue_crossing_point(agent, partner, params)
            .map_or(ActionDirective::FreeFlow, ActionDirective::SeekPoint)),
        (AgentKind::Pedestrian, Action::Decelerate) => Ok(ActionDirective::SetSpeed(agent.speed() / 2.0)),
        (AgentKind::Car, Action::Decelerate) => {
            let speed = agent.speed();
            let d_min = critical_distance(agent, partner, params);
            let rate = car_deceleration_rate(speed, agent.distance_to(partner), d_min);
            Ok(ActionDirective::SetSpeed((speed - rate).max(0.0)))
        }
        (AgentKind::Pedestrian, Action::Deviate) => Ok(ActionDirective::SeekPoint(deviation_point(partner, params))),
        (AgentKind::Car, Action::Deviate) => Err(Error::IllegalAction { agent: agent.id, action: "deviate" }),
    }
}
