//! Microsimulation of mixed pedestrian and car traffic in shared spaces.
//!
//! Free flow follows a social force model, conflicts between road users are
//! detected around each car, and complex conflicts are resolved with a
//! leader-follower game. Calibration helpers (genetic search, logit-based
//! feature selection) live here too so they stay usable without `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod conflicts;
pub mod engine;
pub mod error;
pub mod forces;
pub mod ga;
pub mod game;
pub mod geom;
pub mod logit;
pub mod metrics;
pub mod params;
pub mod planner;
pub mod scene;

pub use conflicts::{recognize_conflicts, Conflict, ConflictClass};
pub use engine::{run_scenario, Mode, Scenario, SimulationConfig, SimulationTrace, WorldState};
pub use error::{Error, Result};
pub use game::{solve_spne, Action, Feature, FeatureVector, PayoffGame};
pub use geom::{Polygon, Rect, Vec2};
pub use params::{GameParams, ParameterSet, Regime, SfmParams};
pub use scene::{AgentId, AgentKind, AgentState, Scene};
