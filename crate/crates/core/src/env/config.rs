//! Episode configuration: horizon, randomization, reward weights and
//! observation bounds.

use serde::{Deserialize, Serialize};

use super::obs::ObsBounds;
use super::EnvError;
use crate::physics::RockFamily;

pub const DEFAULT_ENV_CFG: &str = include_str!("../../fixtures/env.cfg");

/// Guidance reward weights and condition thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    /// Half-width of the goal proximity square (m).
    pub delta_prox: f64,
    /// Pitch and roll band (rad).
    pub delta_tilt: f64,
    pub x_truncate: f64,
    pub y_truncate: f64,
    /// Reward per step spent in the goal condition.
    pub goal_reward: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 13.0,
            w2: 8.0,
            w3: 3.0 * 200.0 * 200.0,
            w4: 12.0,
            w5: 1.0,
            delta_prox: 0.2,
            delta_tilt: 0.1,
            x_truncate: -13.0,
            y_truncate: 1.0,
            goal_reward: 5.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w4", self.w4),
            ("w5", self.w5),
            ("delta_prox", self.delta_prox),
            ("delta_tilt", self.delta_tilt),
            ("y_truncate", self.y_truncate),
            ("goal_reward", self.goal_reward),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("reward.{name} = {v} must be positive")));
            }
        }
        if !(self.x_truncate < 0.0) {
            return Err(EnvError::Config(format!(
                "reward.x_truncate = {} must be negative",
                self.x_truncate
            )));
        }
        Ok(())
    }
}

/// Initial-state distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Randomization {
    pub goal_mean: [f64; 2],
    pub goal_std: [f64; 2],
    /// Goal samples farther than this from the mean are projected onto the
    /// circle (m).
    pub goal_radius: f64,
    pub density_mean: f64,
    pub density_std: f64,
    pub rock_families: Vec<RockFamily>,
    pub rock_x_range: [f64; 2],
    /// Pins the spawn x instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_rock_x: Option<f64>,
    /// Pins the goal instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_goal: Option<[f64; 2]>,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            goal_mean: [-7.0, 1.5],
            goal_std: [0.1, 0.1],
            goal_radius: 0.3,
            density_mean: 2000.0,
            density_std: 85.0,
            rock_families: vec![RockFamily::I, RockFamily::II],
            rock_x_range: [-11.5, -8.0],
            fixed_rock_x: None,
            fixed_goal: None,
        }
    }
}

/// Effective workspace along x (m).
pub const WORKSPACE_X: [f64; 2] = [-13.0, 0.0];

impl Randomization {
    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if self.rock_families.is_empty() {
            return err("randomization.rock_families is empty".into());
        }
        let [lo, hi] = self.rock_x_range;
        if !(lo <= hi && lo >= WORKSPACE_X[0] && hi <= WORKSPACE_X[1]) {
            return err(format!(
                "randomization.rock_x_range [{lo}, {hi}] must lie within [{}, {}]",
                WORKSPACE_X[0], WORKSPACE_X[1]
            ));
        }
        if let Some(x) = self.fixed_rock_x {
            if !(WORKSPACE_X[0]..=WORKSPACE_X[1]).contains(&x) {
                return err(format!("randomization.fixed_rock_x = {x} outside the workspace"));
            }
        }
        if self.goal_std.iter().any(|s| !(*s >= 0.0)) || !(self.goal_radius >= 0.0) {
            return err("randomization goal spread must be non-negative".into());
        }
        if !(self.density_mean > 0.0 && self.density_std >= 0.0) {
            return err("randomization density must be positive with non-negative spread".into());
        }
        Ok(())
    }
}

/// Everything that shapes an episode apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub version: u32,
    /// Steps per episode (H).
    pub horizon: usize,
    pub settle_steps: usize,
    /// Key into the materials table.
    pub material: String,
    pub randomization: Randomization,
    pub reward: RewardWeights,
    pub observation: ObsBounds,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_ENV_CFG).expect("bundled env.cfg is valid")
    }
}

impl EnvConfig {
    pub const VERSION: u32 = 1;

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let cfg: EnvConfig = toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.version != Self::VERSION {
            return Err(EnvError::Config(format!(
                "env config version {} (expected {})",
                self.version,
                Self::VERSION
            )));
        }
        if self.horizon == 0 {
            return Err(EnvError::Config("horizon must be positive".into()));
        }
        self.randomization.validate()?;
        self.reward.validate()?;
        self.observation.validate()
    }

    /// The reduced task used for quick training checks: one rock family,
    /// fixed spawn, goal at the mean, dirt.
    pub fn simplified() -> Self {
        let mut cfg = Self::default();
        cfg.material = "dirt".into();
        cfg.randomization.rock_families = vec![RockFamily::I];
        cfg.randomization.fixed_rock_x = Some(-9.0);
        cfg.randomization.fixed_goal = Some(cfg.randomization.goal_mean);
        cfg
    }
}
