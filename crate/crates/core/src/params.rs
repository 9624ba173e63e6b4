//! Model parameters with their calibrated defaults.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Social force and safety parameters.
///
/// The critical spatial distance carries separate pedestrian-to-car and
/// car-to-car values so that the twelve-gene calibration schema maps one
/// gene per field (τ and the field-of-view half-angle are not calibrated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfmParams {
    /// Interaction strength between pedestrians, m²/s².
    pub v_pp: f64,
    /// Interaction strength pedestrian-to-car, m²/s².
    pub v_pc: f64,
    /// Obstacle interaction strength, m²/s².
    pub u_obstacle: f64,
    /// Range of pedestrian-pedestrian repulsion, m.
    pub sigma_pp: f64,
    /// Range of pedestrian-car repulsion, m.
    pub sigma_pc: f64,
    /// Range of obstacle repulsion, m.
    pub obstacle_range: f64,
    /// Weight of interactions from behind, in `[0, 1]`.
    pub lambda: f64,
    /// Relaxation time, s.
    pub tau: f64,
    /// Critical spatial distance pedestrian-to-car, m.
    pub d_min_pc: f64,
    /// Critical spatial distance car-to-car, m.
    pub d_min_cc: f64,
    /// Scaling factor for Continue and Deviate targets, m.
    pub s_a: f64,
    /// View range, m.
    pub view_range: f64,
    /// Scaling factor of conflict prediction.
    pub s_c: f64,
    /// Pedestrian field-of-view half-angle used while deviating, degrees.
    pub fov_half_angle: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            v_pp: 1.4,
            v_pc: 10.0,
            u_obstacle: 10.0,
            sigma_pp: 0.4,
            sigma_pc: 0.2,
            obstacle_range: 0.2,
            lambda: 0.2,
            tau: 0.5,
            d_min_pc: 8.0,
            d_min_cc: 8.0,
            s_a: 7.0,
            view_range: 18.4,
            s_c: 9.0,
            fov_half_angle: 113.0,
        }
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("v_pp", self.v_pp),
            ("v_pc", self.v_pc),
            ("u_obstacle", self.u_obstacle),
            ("sigma_pp", self.sigma_pp),
            ("sigma_pc", self.sigma_pc),
            ("obstacle_range", self.obstacle_range),
            ("tau", self.tau),
            ("d_min_pc", self.d_min_pc),
            ("d_min_cc", self.d_min_cc),
            ("s_a", self.s_a),
            ("view_range", self.view_range),
            ("s_c", self.s_c),
            ("fov_half_angle", self.fov_half_angle),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }

    /// Calibratable fields in gene order.
    pub const GENE_NAMES: [&'static str; 12] = [
        "v_pp", "v_pc", "sigma_pp", "sigma_pc", "d_min_pc", "d_min_cc", "u_obstacle",
        "obstacle_range", "lambda", "s_a", "view_range", "s_c",
    ];

    pub fn to_genes(&self) -> Vec<f64> {
        alloc::vec![
            self.v_pp, self.v_pc, self.sigma_pp, self.sigma_pc, self.d_min_pc, self.d_min_cc,
            self.u_obstacle, self.obstacle_range, self.lambda, self.s_a, self.view_range, self.s_c,
        ]
    }

    /// Replaces the calibratable fields from a 12-gene chromosome.
    pub fn with_genes(&self, genes: &[f64]) -> Result<Self> {
        if genes.len() != 12 {
            return Err(Error::InvalidArgument(format!("expected 12 genes, got {}", genes.len())));
        }
        let mut p = *self;
        p.v_pp = genes[0];
        p.v_pc = genes[1];
        p.sigma_pp = genes[2];
        p.sigma_pc = genes[3];
        p.d_min_pc = genes[4];
        p.d_min_cc = genes[5];
        p.u_obstacle = genes[6];
        p.obstacle_range = genes[7];
        p.lambda = genes[8];
        p.s_a = genes[9];
        p.view_range = genes[10];
        p.s_c = genes[11];
        p.validate()?;
        Ok(p)
    }
}

/// Behavioural norm set used for payoff estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Norms calibrated on the German street dataset.
    #[default]
    Hbs,
    /// Adapted norms for the Chinese campus dataset.
    Dut,
}

/// Payoff weights and thresholds of the game layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameParams {
    pub g_own_speed: f64,
    pub g_competitor_speed: f64,
    pub g_angle: f64,
    pub g_noai: f64,
    pub g_stopped: f64,
    pub g_distance: f64,
    /// Uncalibrated; zero keeps the feature inert.
    pub g_giveway: f64,
    pub g_following: f64,
    pub g_followed: f64,
    /// Pedestrian "high" walking speed, m/s.
    pub s_high: f64,
    /// Normal car speed, m/s.
    pub s_normal: f64,
    /// Euclidean/Manhattan slack of the pedestrian distance feature, m.
    pub m: f64,
    /// Range of the car distance feature, m.
    pub n: f64,
    pub base_continue: f64,
    pub base_deviate: f64,
    pub base_decelerate: f64,
    pub collision_penalty: f64,
}

impl Default for GameParams {
    fn default() -> Self {
        GameParams {
            g_own_speed: 11.0,
            g_competitor_speed: 11.0,
            g_angle: 1.0,
            g_noai: 3.0,
            g_stopped: 2.0,
            g_distance: 1.0,
            g_giveway: 0.0,
            g_following: 0.0,
            g_followed: 0.0,
            s_high: 1.7,
            s_normal: 5.5,
            m: 2.0,
            n: 10.0,
            base_continue: 4.0,
            base_deviate: 3.0,
            base_decelerate: 2.0,
            collision_penalty: -100.0,
        }
    }
}

impl GameParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("g_own_speed", self.g_own_speed),
            ("g_competitor_speed", self.g_competitor_speed),
            ("g_angle", self.g_angle),
            ("g_noai", self.g_noai),
            ("g_stopped", self.g_stopped),
            ("g_distance", self.g_distance),
            ("g_giveway", self.g_giveway),
            ("g_following", self.g_following),
            ("g_followed", self.g_followed),
            ("m", self.m),
            ("n", self.n),
            ("s_high", self.s_high),
            ("s_normal", self.s_normal),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub const GENE_NAMES: [&'static str; 6] =
        ["g_own_speed", "g_competitor_speed", "g_angle", "g_noai", "g_stopped", "g_distance"];

    pub fn to_genes(&self) -> Vec<f64> {
        alloc::vec![
            self.g_own_speed,
            self.g_competitor_speed,
            self.g_angle,
            self.g_noai,
            self.g_stopped,
            self.g_distance,
        ]
    }

    pub fn with_genes(&self, genes: &[f64]) -> Result<Self> {
        if genes.len() != 6 {
            return Err(Error::InvalidArgument(format!("expected 6 genes, got {}", genes.len())));
        }
        let mut g = *self;
        g.g_own_speed = genes[0];
        g.g_competitor_speed = genes[1];
        g.g_angle = genes[2];
        g.g_noai = genes[3];
        g.g_stopped = genes[4];
        g.g_distance = genes[5];
        g.validate()?;
        Ok(g)
    }

    /// Multiplies every utility constant, weights and base values alike.
    pub fn scaled(&self, k: f64) -> Self {
        let mut g = *self;
        g.g_own_speed *= k;
        g.g_competitor_speed *= k;
        g.g_angle *= k;
        g.g_noai *= k;
        g.g_stopped *= k;
        g.g_distance *= k;
        g.g_giveway *= k;
        g.g_following *= k;
        g.g_followed *= k;
        g.base_continue *= k;
        g.base_deviate *= k;
        g.base_decelerate *= k;
        g.collision_penalty *= k;
        g
    }
}

/// Reduced safety ranges used under [`Regime::Dut`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DutAdaptation {
    pub view_range: f64,
    pub d_min: f64,
}

impl Default for DutAdaptation {
    fn default() -> Self {
        DutAdaptation { view_range: 12.0, d_min: 5.0 }
    }
}

/// Every model parameter as one record.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParameterSet {
    pub regime: Regime,
    pub sfm: SfmParams,
    pub game: GameParams,
    pub dut: DutAdaptation,
}

impl ParameterSet {
    pub fn validate(&self) -> Result<()> {
        self.sfm.validate()?;
        self.game.validate()?;
        if !(self.dut.view_range > 0.0 && self.dut.d_min > 0.0) {
            return Err(Error::InvalidArgument("dut ranges must be positive".into()));
        }
        Ok(())
    }

    /// Force and safety parameters with the regime's overrides applied.
    pub fn effective_sfm(&self) -> SfmParams {
        match self.regime {
            Regime::Hbs => self.sfm,
            Regime::Dut => SfmParams {
                view_range: self.dut.view_range,
                d_min_pc: self.dut.d_min,
                d_min_cc: self.dut.d_min,
                ..self.sfm
            },
        }
    }

    /// Whether cars react to pedestrians already walking in front of them.
    pub fn reactive_stopping_enabled(&self) -> bool {
        self.regime == Regime::Hbs
    }
}
