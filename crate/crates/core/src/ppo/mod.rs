//! On-policy training with clipped-surrogate PPO.

pub mod buffer;
pub mod gae;
pub mod loss;
pub mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvError, ACT_DIM, OBS_DIM};
use crate::nn::NnError;

pub use buffer::RolloutBuffer;
pub use gae::{compute_gae, Boundary};
pub use loss::{
    clip_grad_norm, clipped_surrogate, clipped_surrogate_grad, normalize_advantages, success_rate,
    total_loss,
};
pub use trainer::{CurveRow, Trainer, TrainerState, UpdateStats, CURVE_HEADER};

pub const DEFAULT_PPO_CFG: &str = include_str!("../../fixtures/ppo.cfg");

/// Episodes averaged by the training-curve metrics.
pub const METRIC_WINDOW: usize = 100;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("config: {0}")]
    Config(String),
    #[error("non-finite loss at iteration {iteration}; minibatch dumped to {dump}")]
    NonFinite { iteration: u64, dump: String },
    #[error("resume: {0}")]
    Resume(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub version: u32,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    /// Samples per minibatch.
    pub minibatch_size: usize,
    pub n_steps_per_env: usize,
    pub n_envs: usize,
    pub total_timesteps: u64,
    pub hidden: Vec<usize>,
    /// Iterations between checkpoints.
    pub checkpoint_every: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_PPO_CFG).expect("bundled ppo.cfg is valid")
    }
}

impl PpoConfig {
    pub const VERSION: u32 = 1;

    pub fn parse(text: &str) -> Result<Self, PpoError> {
        let cfg: PpoConfig = toml::from_str(text).map_err(|e| PpoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn batch_size(&self) -> usize {
        self.n_envs * self.n_steps_per_env
    }

    pub fn validate(&self) -> Result<(), PpoError> {
        let err = |m: String| Err(PpoError::Config(m));
        if self.version != Self::VERSION {
            return err(format!("ppo config version {} (expected {})", self.version, Self::VERSION));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return err(format!("gamma = {} must lie in (0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err(format!("gae_lambda = {} must lie in [0, 1]", self.gae_lambda));
        }
        if !(self.clip_range > 0.0) {
            return err("clip_range must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return err("learning_rate and max_grad_norm must be positive".into());
        }
        if !(self.entropy_coef >= 0.0 && self.vf_coef >= 0.0) {
            return err("loss coefficients must be non-negative".into());
        }
        if self.epochs == 0 || self.n_envs == 0 || self.n_steps_per_env == 0 || self.minibatch_size == 0 {
            return err("epochs, n_envs, n_steps_per_env and minibatch_size must be positive".into());
        }
        if !self.batch_size().is_multiple_of(self.minibatch_size) {
            return err(format!(
                "minibatch_size {} does not divide the rollout size {}",
                self.minibatch_size,
                self.batch_size()
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return err("hidden layer widths must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return err("checkpoint_every must be positive".into());
        }
        Ok(())
    }
}

/// What an environment reports after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Observation after the step (the final one when the episode ended).
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode ended in a true terminal state.
    pub terminal: bool,
    /// Episode was cut short; the trainer bootstraps from `obs`.
    pub truncated: bool,
    /// Goal condition at this step.
    pub goal: bool,
}

/// A deterministic, seedable episodic task.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, PpoError>;
    fn step(&mut self, action: &[f64]) -> Result<Transition, PpoError>;
    /// Hash of everything that shapes the task, recorded in checkpoints.
    fn config_hash(&self) -> String;
}

impl Environment for Env {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACT_DIM
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, PpoError> {
        Ok(Env::reset(self, Some(seed))?.to_vec())
    }

    /// Both horizon and inaccessible-rock endings bootstrap: neither state
    /// is terminal in the value sense.
    fn step(&mut self, action: &[f64]) -> Result<Transition, PpoError> {
        if action.len() != ACT_DIM {
            return Err(PpoError::Shape(format!("action of length {}", action.len())));
        }
        let a = [action[0], action[1], action[2]];
        let r = Env::step(self, &a)?;
        Ok(Transition {
            obs: r.obs.to_vec(),
            reward: r.reward,
            terminal: false,
            truncated: r.done(),
            goal: r.conditions.goal,
        })
    }

    fn config_hash(&self) -> String {
        Env::config_hash(self)
    }
}
