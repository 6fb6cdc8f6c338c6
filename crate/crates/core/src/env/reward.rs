//! Goal, tilt and truncation conditions and the guiding reward.
//!
//! Actions enter the reward in normalized [-1, 1] units and joint forces in
//! kN.

use serde::{Deserialize, Serialize};

use super::config::RewardWeights;

/// Rock within the proximity square around the goal (strict).
pub fn c_proximity(rock: [f64; 2], goal: [f64; 2], delta_prox: f64) -> bool {
    (rock[0] - goal[0]).abs() < delta_prox && (rock[1] - goal[1]).abs() < delta_prox
}

/// Cabin pitch and roll both inside the tilt band (strict).
pub fn c_tilting(theta: f64, phi: f64, delta_tilt: f64) -> bool {
    phi.abs() < delta_tilt && theta.abs() < delta_tilt
}

pub fn c_goal(c_prox: bool, c_tilt: bool) -> bool {
    c_prox && c_tilt
}

/// The rock left the reachable region: thrown sideways or past the far end.
pub fn c_truncate(x_rock: f64, y_rock: f64, w: &RewardWeights) -> bool {
    y_rock.abs() > w.y_truncate || x_rock < w.x_truncate
}

/// Condition flags evaluated after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Conditions {
    pub proximity: bool,
    pub tilting: bool,
    pub goal: bool,
    pub truncate: bool,
}

/// Inputs of the guiding reward for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub rock: [f64; 2],
    pub goal: [f64; 2],
    /// Normalized action of this step.
    pub action: [f64; 3],
    /// Joint forces (kN).
    pub forces: [f64; 3],
    pub prev_action: [f64; 3],
    pub theta: f64,
    pub phi: f64,
}

/// The five guiding penalties and the goal bonus, each already signed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub position_x: f64,
    pub position_z: f64,
    pub energy: f64,
    pub smoothness: f64,
    pub tilt: f64,
    pub goal: f64,
}

impl RewardTerms {
    pub fn compute(input: &RewardInputs, goal_met: bool, w: &RewardWeights) -> Self {
        let dx = input.rock[0] - input.goal[0];
        let dz = input.rock[1] - input.goal[1];
        let energy: f64 = (0..3).map(|i| (input.action[i] * input.forces[i]).powi(2)).sum();
        let smooth: f64 = (0..3).map(|i| (input.action[i] - input.prev_action[i]).powi(2)).sum();
        Self {
            position_x: -dx * dx / w.w1,
            position_z: -dz * dz / w.w2,
            energy: -energy / w.w3,
            smoothness: -smooth / w.w4,
            tilt: -(input.theta * input.theta + input.phi * input.phi) / w.w5,
            goal: goal_reward(goal_met, w),
        }
    }

    pub fn guidance(&self) -> f64 {
        self.position_x + self.position_z + self.energy + self.smoothness + self.tilt
    }

    pub fn total(&self) -> f64 {
        total_reward(self.guidance(), self.goal)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.position_x,
            self.position_z,
            self.energy,
            self.smoothness,
            self.tilt,
            self.goal,
        ]
    }
}

/// Dense shaping term; never positive.
pub fn guidance_reward(input: &RewardInputs, w: &RewardWeights) -> f64 {
    RewardTerms::compute(input, false, w).guidance()
}

pub fn goal_reward(goal_met: bool, w: &RewardWeights) -> f64 {
    if goal_met {
        w.goal_reward
    } else {
        0.0
    }
}

pub fn total_reward(guidance: f64, goal: f64) -> f64 {
    guidance + goal
}

/// Smallest per-step reward possible when the rock stays within `extent`
/// (|Δx|, |Δz|) of the goal, actions lie in [-1, 1], forces are capped at
/// `force_cap` kN and both tilt angles at `tilt_cap`.
pub fn reward_lower_bound(w: &RewardWeights, extent: [f64; 2], force_cap: f64, tilt_cap: f64) -> f64 {
    -extent[0].powi(2) / w.w1
        - extent[1].powi(2) / w.w2
        - 3.0 * force_cap.powi(2) / w.w3
        - 3.0 * 4.0 / w.w4
        - 2.0 * tilt_cap.powi(2) / w.w5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_input() -> RewardInputs {
        RewardInputs {
            rock: [-7.0, 1.5],
            goal: [-7.0, 1.5],
            action: [0.0; 3],
            forces: [0.0; 3],
            prev_action: [0.0; 3],
            theta: 0.0,
            phi: 0.0,
        }
    }

    #[test]
    fn vanishing_terms_give_zero() {
        let w = RewardWeights::default();
        let mut i = zero_input();
        i.forces = [150.0, -80.0, 3.0];
        assert_eq!(guidance_reward(&i, &w), 0.0);
    }

    #[test]
    fn hand_evaluated_position_penalty() {
        let w = RewardWeights::default();
        let mut i = zero_input();
        i.rock = [-8.0, 1.0];
        let expected = -(1.0 / 13.0) - 0.25 / 8.0;
        assert!((guidance_reward(&i, &w) - expected).abs() < 1e-15);
    }
}
