//! Diagonal-Gaussian policy with a state-independent log standard
//! deviation, and the scalar value network.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Mlp, Tape};
use super::NnError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `½ ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Width of the hidden layers of both networks.
pub const HIDDEN: [usize; 2] = [128, 128];

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    /// Stored unclamped; [`GaussianPolicy::log_std`] clamps on use.
    pub log_std: Vec<f64>,
}

/// A sampled action with its log density.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Unclipped sample.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub mean: Vec<f64>,
}

impl GaussianPolicy {
    /// Orthogonal init with gain √2 on hidden layers and 0.01 on the mean
    /// head; log std starts at 0.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], act_dim: usize, rng: &mut R) -> Self {
        let sizes = layer_sizes(obs_dim, hidden, act_dim);
        Self {
            mean: Mlp::orthogonal(&sizes, std::f64::consts::SQRT_2, 0.01, rng),
            log_std: vec![0.0; act_dim],
        }
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    /// Clamps the stored log std into its valid range.
    pub fn clamp_log_std(&mut self) {
        for l in &mut self.log_std {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mean.forward(obs)
    }

    /// `a = μ(obs) + exp(log_std) ⊙ ε` with `ε ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PolicySample, NnError> {
        let mean = self.mean.forward(obs)?;
        let log_std = self.log_std();
        let action: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .map(|(m, l)| m + l.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_prob = diag_gaussian_log_prob(&action, &mean, &log_std);
        Ok(PolicySample {
            action,
            log_prob,
            mean,
        })
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64, NnError> {
        let mean = self.mean.forward(obs)?;
        Ok(diag_gaussian_log_prob(action, &mean, &self.log_std()))
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std().iter().map(|l| l + 0.5 + HALF_LN_2PI).sum()
    }

    /// Total parameter count: mean network then log std.
    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    /// Flat parameter vector: mean network then log std.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.mean.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<(), NnError> {
        if p.len() != self.num_params() {
            return Err(NnError::Shape(format!(
                "{} policy parameters (expected {})",
                p.len(),
                self.num_params()
            )));
        }
        let n = self.mean.num_params();
        self.mean.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
        Ok(())
    }

    /// Gradient of `c · log π(action | obs)` accumulated into `grads`
    /// (flat layout). Uses the mean recorded on `tape`.
    pub fn accumulate_log_prob_grad(
        &self,
        tape: &Tape,
        action: &[f64],
        coef: f64,
        grads: &mut [f64],
    ) -> Result<(), NnError> {
        let mean = tape.output().ok_or(NnError::NoForwardPass)?;
        let log_std = self.log_std();
        let n = self.mean.num_params();
        let mut upstream = vec![0.0; mean.len()];
        for i in 0..mean.len() {
            let var = (2.0 * log_std[i]).exp();
            let diff = action[i] - mean[i];
            upstream[i] = coef * diff / var;
            // d/dlogσ of -(a-μ)²/(2σ²) - logσ, zero where the clamp is active
            let raw = self.log_std[i];
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                grads[n + i] += coef * (diff * diff / var - 1.0);
            }
        }
        self.mean.backward(tape, &upstream, &mut grads[..n])?;
        Ok(())
    }

    /// Gradient of `c · entropy` accumulated into `grads` (flat layout).
    pub fn accumulate_entropy_grad(&self, coef: f64, grads: &mut [f64]) {
        let n = self.mean.num_params();
        for (i, raw) in self.log_std.iter().enumerate() {
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(raw) {
                grads[n + i] += coef;
            }
        }
    }
}

/// Log density of a diagonal Gaussian.
pub fn diag_gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), l)| {
            let z = (x - m) / l.exp();
            -0.5 * z * z - l - HALF_LN_2PI
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
}

impl ValueNet {
    /// Orthogonal init with gain √2 on hidden layers and 1 on the output.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self {
            net: Mlp::orthogonal(&layer_sizes(obs_dim, hidden, 1), std::f64::consts::SQRT_2, 1.0, rng),
        }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        Ok(self.net.forward(obs)?[0])
    }
}
