//! Storage for one rollout, laid out environment-major.

use super::gae::{compute_gae, Boundary};
use super::PpoError;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub n_steps: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Flat `[env][t][obs_dim]`.
    pub obs: Vec<f64>,
    /// Flat `[env][t][act_dim]`, unclipped samples.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub boundaries: Vec<Boundary>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    filled: Vec<usize>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, n_steps: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = n_envs * n_steps;
        Self {
            n_envs,
            n_steps,
            obs_dim,
            act_dim,
            obs: vec![0.0; n * obs_dim],
            actions: vec![0.0; n * act_dim],
            log_probs: vec![0.0; n],
            values: vec![0.0; n],
            rewards: vec![0.0; n],
            boundaries: vec![Boundary::Continue; n],
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
            filled: vec![0; n_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled.iter().all(|&f| f == self.n_steps)
    }

    /// Discards the contents so the buffer can be refilled.
    pub fn clear(&mut self) {
        self.filled.iter_mut().for_each(|f| *f = 0);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        env: usize,
        obs: &[f64],
        action: &[f64],
        log_prob: f64,
        value: f64,
        reward: f64,
        boundary: Boundary,
    ) -> Result<(), PpoError> {
        let t = self.filled[env];
        if t >= self.n_steps {
            return Err(PpoError::Shape(format!("environment {env} rollout already full")));
        }
        if obs.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(PpoError::Shape("observation or action width".into()));
        }
        let i = env * self.n_steps + t;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(action);
        self.log_probs[i] = log_prob;
        self.values[i] = value;
        self.rewards[i] = reward;
        self.boundaries[i] = boundary;
        self.filled[env] = t + 1;
        Ok(())
    }

    /// Fills advantages and returns; `bootstrap[e]` is the value of
    /// environment `e`'s observation after its last stored step.
    pub fn compute_advantages(&mut self, bootstrap: &[f64], gamma: f64, lambda: f64) -> Result<(), PpoError> {
        if !self.is_full() || bootstrap.len() != self.n_envs {
            return Err(PpoError::Shape("rollout incomplete or bootstrap count wrong".into()));
        }
        for e in 0..self.n_envs {
            let r = e * self.n_steps..(e + 1) * self.n_steps;
            let (adv, ret) = compute_gae(
                &self.rewards[r.clone()],
                &self.values[r.clone()],
                &self.boundaries[r.clone()],
                bootstrap[e],
                gamma,
                lambda,
            )?;
            self.advantages[r.clone()].copy_from_slice(&adv);
            self.returns[r].copy_from_slice(&ret);
        }
        Ok(())
    }

    pub fn obs_at(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_at(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}
