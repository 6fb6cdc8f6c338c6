//! Policy observation and its [-1, 1] normalization.

use serde::{Deserialize, Serialize};

use super::EnvError;

pub const OBS_DIM: usize = 17;
pub const ACT_DIM: usize = 3;

/// Component names in vector order.
pub const OBS_NAMES: [&str; OBS_DIM] = [
    "q_boom", "q_arm", "q_bucket", "v_boom", "v_arm", "v_bucket", "f_boom", "f_arm", "f_bucket",
    "x_bucket", "z_bucket", "x_rock", "z_rock", "x_goal", "z_goal", "theta", "phi",
];

/// Raw observation in physical units (m, m/s, kN, rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub q: [f64; 3],
    pub v: [f64; 3],
    pub f: [f64; 3],
    pub bucket: [f64; 2],
    pub rock: [f64; 2],
    pub goal: [f64; 2],
    pub theta: f64,
    pub phi: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[0..3].copy_from_slice(&self.q);
        out[3..6].copy_from_slice(&self.v);
        out[6..9].copy_from_slice(&self.f);
        out[9..11].copy_from_slice(&self.bucket);
        out[11..13].copy_from_slice(&self.rock);
        out[13..15].copy_from_slice(&self.goal);
        out[15] = self.theta;
        out[16] = self.phi;
        out
    }

    pub fn from_array(a: &[f64; OBS_DIM]) -> Self {
        Self {
            q: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
            f: [a[6], a[7], a[8]],
            bucket: [a[9], a[10]],
            rock: [a[11], a[12]],
            goal: [a[13], a[14]],
            theta: a[15],
            phi: a[16],
        }
    }
}

/// Per-component min/max used by the affine normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsBounds {
    pub min: [f64; OBS_DIM],
    pub max: [f64; OBS_DIM],
}

impl ObsBounds {
    pub fn validate(&self) -> Result<(), EnvError> {
        for i in 0..OBS_DIM {
            let (lo, hi) = (self.min[i], self.max[i]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(EnvError::Config(format!(
                    "observation bounds for {} must satisfy min < max, got [{lo}, {hi}]",
                    OBS_NAMES[i]
                )));
            }
        }
        Ok(())
    }

    /// `2 (x - min) / (max - min) - 1`, clipped to [-1, 1].
    pub fn normalize(&self, raw: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        std::array::from_fn(|i| {
            let (lo, hi) = (self.min[i], self.max[i]);
            (2.0 * (raw[i] - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
        })
    }

    /// Inverse of [`normalize`](Self::normalize) on in-bounds values.
    pub fn denormalize(&self, n: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        std::array::from_fn(|i| {
            let (lo, hi) = (self.min[i], self.max[i]);
            lo + (n[i] + 1.0) * 0.5 * (hi - lo)
        })
    }
}

/// Clips a normalized action to [-1, 1] and scales it to joint speeds.
pub fn scale_action(a: &[f64; ACT_DIM], max_speeds: &[f64; ACT_DIM]) -> [f64; ACT_DIM] {
    std::array::from_fn(|i| clip_unit(a[i]) * max_speeds[i])
}

/// Clips to [-1, 1]; NaN maps to 0.
pub fn clip_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}
