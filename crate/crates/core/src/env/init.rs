//! Initial-state sampling: goal, rock and pre-positioned manipulator.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::Randomization;
use crate::physics::RockFamily;

/// Manipulator start extensions by rock x: rows of (lower bound inclusive,
/// extensions), scanned top-down. The first row is open above and the last
/// open below.
pub const INITIAL_CONFIGURATIONS: [(f64, [f64; 3]); 9] = [
    (-8.0, [0.13, 0.24, -0.88]),
    (-8.5, [0.08, 0.11, -0.80]),
    (-9.0, [0.06, -0.03, -0.74]),
    (-9.5, [0.03, -0.15, -0.74]),
    (-10.0, [-0.01, -0.33, -0.70]),
    (-10.5, [-0.03, -0.39, -0.70]),
    (-11.0, [-0.10, -0.57, -0.70]),
    (-11.5, [-0.10, -0.70, -0.70]),
    (f64::NEG_INFINITY, [-0.16, -0.80, -0.78]),
];

/// Start extensions (boom, arm, bucket) for a rock spawned at `x_rock`.
pub fn initial_extensions(x_rock: f64) -> [f64; 3] {
    INITIAL_CONFIGURATIONS
        .iter()
        .find(|(lo, _)| x_rock >= *lo)
        .map(|(_, q)| *q)
        .unwrap_or(INITIAL_CONFIGURATIONS[8].1)
}

/// Projects `sample` radially onto the circle of `radius` around `mean`
/// when it lies outside.
pub fn project_goal(sample: [f64; 2], mean: [f64; 2], radius: f64) -> [f64; 2] {
    let d = [sample[0] - mean[0], sample[1] - mean[1]];
    let r = d[0].hypot(d[1]);
    if r <= radius {
        sample
    } else {
        let s = radius / r;
        [mean[0] + d[0] * s, mean[1] + d[1] * s]
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        // still consume a draw so fixed and random configs share stream layout
        let _: f64 = rng.random();
        return mean;
    }
    Normal::new(mean, std).expect("validated spread").sample(rng)
}

/// One draw from the initial-state distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSample {
    pub goal: [f64; 2],
    pub density: f64,
    pub family: RockFamily,
    pub rock_x: f64,
}

/// Draws goal, density, family and spawn x in that order.
pub fn sample_initial<R: Rng + ?Sized>(spec: &Randomization, rng: &mut R) -> InitialSample {
    let raw = [
        normal(rng, spec.goal_mean[0], spec.goal_std[0]),
        normal(rng, spec.goal_mean[1], spec.goal_std[1]),
    ];
    let goal = spec
        .fixed_goal
        .unwrap_or_else(|| project_goal(raw, spec.goal_mean, spec.goal_radius));
    let density = normal(rng, spec.density_mean, spec.density_std);
    let family = spec.rock_families[rng.random_range(0..spec.rock_families.len())];
    let [lo, hi] = spec.rock_x_range;
    let x: f64 = if lo < hi { rng.random_range(lo..hi) } else { lo };
    InitialSample {
        goal,
        density,
        family,
        rock_x: spec.fixed_rock_x.unwrap_or(x),
    }
}
