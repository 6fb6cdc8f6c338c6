//! Generalized advantage estimation.

use serde::{Deserialize, Serialize};

use super::PpoError;

/// How a transition relates to the end of its episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// The episode continues; the next value is the next stored value.
    Continue,
    /// True terminal state: nothing to bootstrap.
    Terminal,
    /// Cut short; bootstrap with the value of the final observation.
    Truncated(f64),
}

/// Advantages and returns (`A + V`) for one environment's trajectory.
/// `bootstrap_value` is the value of the observation after the last
/// transition, used when that transition is [`Boundary::Continue`].
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    boundaries: &[Boundary],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || boundaries.len() != n {
        return Err(PpoError::Shape(format!(
            "rewards {n}, values {}, boundaries {}",
            values.len(),
            boundaries.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = match boundaries[t] {
            Boundary::Continue => (if t + 1 < n { values[t + 1] } else { bootstrap_value }, 1.0),
            Boundary::Terminal => (0.0, 0.0),
            Boundary::Truncated(v) => (v, 0.0),
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * carry * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
