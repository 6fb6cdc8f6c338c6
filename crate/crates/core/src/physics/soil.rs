//! Soil materials and the bucket–soil reaction law.
//!
//! The reaction is a separable earth-moving model: a passive earth-pressure
//! term growing with the square of the submerged depth plus a cohesion term
//! linear in depth, both scaled by the bucket width and applied against the
//! cutting-edge velocity.

use serde::{Deserialize, Serialize};

use super::terrain::TerrainField;
use super::PhysicsError;
use crate::geom::{lower_envelope, perp, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilMaterial {
    /// Pa
    pub cohesion: f64,
    /// kg/m³
    pub density: f64,
    /// kg/m³
    pub max_density: f64,
    /// Pa
    pub youngs_modulus: f64,
    /// rad
    pub internal_friction_angle: f64,
    /// rad
    pub dilatancy_angle: f64,
    pub swell_factor: f64,
    pub repose_compaction_rate: f64,
}

impl SoilMaterial {
    /// Cohesive dirt used for training.
    pub fn dirt() -> Self {
        Self {
            cohesion: 2100.0,
            density: 1474.0,
            max_density: 2000.0,
            youngs_modulus: 1.0e6,
            internal_friction_angle: 0.70,
            dilatancy_angle: 0.23,
            swell_factor: 1.10,
            repose_compaction_rate: 24.0,
        }
    }

    /// Cohesionless sand used for the unseen-material evaluation.
    pub fn sand() -> Self {
        Self {
            cohesion: 0.0,
            density: 1474.0,
            max_density: 1800.0,
            youngs_modulus: 4.5e6,
            internal_friction_angle: 0.68,
            dilatancy_angle: 0.16,
            swell_factor: 1.0,
            repose_compaction_rate: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let fields = [
            ("cohesion", self.cohesion),
            ("density", self.density),
            ("max_density", self.max_density),
            ("youngs_modulus", self.youngs_modulus),
            ("internal_friction_angle", self.internal_friction_angle),
            ("dilatancy_angle", self.dilatancy_angle),
            ("swell_factor", self.swell_factor),
            ("repose_compaction_rate", self.repose_compaction_rate),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(PhysicsError::InvalidMaterial(format!("{name} = {v}")));
            }
        }
        let phi = self.internal_friction_angle;
        if phi <= 0.0 || phi >= std::f64::consts::FRAC_PI_2 {
            return Err(PhysicsError::InvalidMaterial(format!(
                "internal_friction_angle = {phi} outside (0, π/2)"
            )));
        }
        Ok(())
    }

    /// Rankine passive coefficient with a dilatancy enhancement.
    pub fn passive_coefficient(&self) -> f64 {
        let phi = self.internal_friction_angle;
        let t = (std::f64::consts::FRAC_PI_4 + 0.5 * phi).tan();
        t * t * (1.0 + self.dilatancy_angle.sin())
    }

    pub fn cohesion_coefficient(&self) -> f64 {
        2.0 * self.passive_coefficient().sqrt()
    }

    /// Passive resistance per unit width (N/m) at submerged depth `depth`.
    pub fn resistance_per_width(&self, depth: f64, gravity: f64) -> f64 {
        if depth <= 0.0 {
            return 0.0;
        }
        0.5 * self.density * gravity * depth * depth * self.passive_coefficient()
            + self.cohesion * depth * self.cohesion_coefficient()
    }

    /// Ultimate bearing pressure (Pa) of a strip footing of width `b` at the
    /// surface, using the Vesić bearing factors.
    pub fn bearing_pressure(&self, b: f64, gravity: f64) -> f64 {
        let phi = self.internal_friction_angle;
        let t = (std::f64::consts::FRAC_PI_4 + 0.5 * phi).tan();
        let nq = (std::f64::consts::PI * phi.tan()).exp() * t * t;
        let nc = (nq - 1.0) / phi.tan();
        let ngamma = 2.0 * (nq + 1.0) * phi.tan();
        self.cohesion * nc + 0.5 * self.density * gravity * b * ngamma
    }
}

/// Result of pushing the bucket through the soil for one step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SoilReaction {
    /// Force on the bucket (N).
    pub force: Vec2,
    /// Point the force acts through.
    pub point: Vec2,
    /// Submerged depth of the deepest bucket point (m).
    pub depth: f64,
    /// Soil volume moved out of the terrain this step (m³).
    pub removed_volume: f64,
    /// Per-node height decrements realising `removed_volume`.
    pub removal: Vec<(usize, f64)>,
}

impl SoilReaction {
    pub fn apply(&self, terrain: &mut TerrainField) {
        for &(i, dh) in &self.removal {
            terrain.heights[i] -= dh;
        }
    }
}

/// Boundary points of `poly` lying in the soil, including the points where
/// its edges cross the terrain surface.
fn submerged_points(poly: &[Vec2], terrain: &TerrainField) -> Vec<Vec2> {
    let n = poly.len();
    let gap = |p: &Vec2| p.y - terrain.height_at(p.x);
    let mut pts = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ga, gb) = (gap(&a), gap(&b));
        if ga <= 0.0 {
            pts.push(a);
        }
        if (ga <= 0.0) != (gb <= 0.0) {
            // bisection on the edge for the surface crossing
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                let p = a + (b - a) * mid;
                if (gap(&p) <= 0.0) == (ga <= 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            pts.push(a + (b - a) * (0.5 * (lo + hi)));
        }
    }
    pts
}

/// Soil reaction on the bucket outline `bucket` moving with cutting-edge
/// velocity `velocity` for `dt` seconds. The bucket has out-of-plane width
/// `width`. Returns zero force and volume when nothing is submerged or the
/// bucket is at rest.
pub fn soil_reaction(
    bucket: &[Vec2],
    velocity: Vec2,
    terrain: &TerrainField,
    material: &SoilMaterial,
    width: f64,
    gravity: f64,
    dt: f64,
) -> SoilReaction {
    let depth = bucket
        .iter()
        .map(|p| terrain.height_at(p.x) - p.y)
        .fold(0.0, f64::max);
    let speed = velocity.norm();
    if depth <= 0.0 || speed < 1e-9 {
        return SoilReaction {
            depth,
            ..SoilReaction::default()
        };
    }

    let pts = submerged_points(bucket, terrain);
    let dir = velocity / speed;
    let across = perp(&dir);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut point = Vec2::zeros();
    for p in &pts {
        let s = across.dot(p);
        lo = lo.min(s);
        hi = hi.max(s);
        point += p;
    }
    point /= pts.len() as f64;
    let swept_area = (hi - lo) * speed * dt;

    let magnitude = width * material.resistance_per_width(depth, gravity);
    let force = -dir * magnitude;

    // cap by the soil actually lying above the bucket's lower envelope
    let (x0, x1) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.x), b.max(p.x))
        });
    let mut deficits = Vec::new();
    let mut available = 0.0;
    for i in terrain.nodes_between(x0, x1) {
        if let Some(z) = lower_envelope(bucket, terrain.node_x(i)) {
            let d = terrain.heights[i] - z;
            if d > 0.0 {
                deficits.push((i, d));
                available += d * terrain.cell_size;
            }
        }
    }
    let budget = swept_area.min(available);
    let removal = if available > 0.0 {
        let scale = budget / available;
        deficits.into_iter().map(|(i, d)| (i, d * scale)).collect()
    } else {
        Vec::new()
    };
    let removed_area = if available > 0.0 { budget } else { 0.0 };

    SoilReaction {
        force,
        point,
        depth,
        removed_volume: removed_area * width,
        removal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plate(x: f64, z_bottom: f64, height: f64, thick: f64) -> Vec<Vec2> {
        vec![
            Vec2::new(x, z_bottom),
            Vec2::new(x + thick, z_bottom),
            Vec2::new(x + thick, z_bottom + height),
            Vec2::new(x, z_bottom + height),
        ]
    }

    #[test]
    fn table_materials_validate() {
        SoilMaterial::dirt().validate().unwrap();
        SoilMaterial::sand().validate().unwrap();
        let mut bad = SoilMaterial::dirt();
        bad.internal_friction_angle = 1.6;
        assert!(bad.validate().is_err());
        bad.internal_friction_angle = 0.5;
        bad.cohesion = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn above_ground_is_inert() {
        let t = TerrainField::flat(-16.0, 1.0, 0.05, 0.0);
        let r = soil_reaction(
            &plate(-9.0, 0.5, 1.0, 0.1),
            Vec2::new(1.0, 0.0),
            &t,
            &SoilMaterial::dirt(),
            1.9,
            9.81,
            1.0 / 60.0,
        );
        assert_eq!(r.force, Vec2::zeros());
        assert_eq!(r.removed_volume, 0.0);
        assert!(r.removal.is_empty());
    }

    #[test]
    fn rectangle_sweep_matches_analytic_area() {
        // a plate submerged 0.3 m dragged horizontally sweeps depth · |v| · dt
        let t = TerrainField::flat(-16.0, 1.0, 0.05, 0.0);
        let dt = 1.0 / 60.0;
        let r = soil_reaction(
            &plate(-9.02, -0.3, 1.0, 0.5),
            Vec2::new(0.5, 0.0),
            &t,
            &SoilMaterial::dirt(),
            2.0,
            9.81,
            dt,
        );
        assert_relative_eq!(r.removed_volume, 2.0 * 0.3 * 0.5 * dt, epsilon = 1e-9);
        assert!(r.force.x < 0.0);
        assert_relative_eq!(r.force.y, 0.0);
    }
}
