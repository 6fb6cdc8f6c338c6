//! Excavator linkage: actuator maps, bucket shell and forward kinematics.

use serde::{Deserialize, Serialize};

use super::terrain::TerrainField;
use super::PhysicsError;
use crate::geom::{centroid, is_simple, perp, rotate, signed_area, Vec2};

pub const DEFAULT_GEOMETRY_CFG: &str = include_str!("../../fixtures/geometry.cfg");

/// Affine map from actuator extension (m) to joint angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorMap {
    pub offset: f64,
    pub slope: f64,
    pub min: f64,
    pub max: f64,
}

impl ActuatorMap {
    #[inline]
    pub fn angle(&self, extension: f64) -> f64 {
        self.offset + self.slope * extension
    }

    pub fn clamp(&self, extension: f64) -> f64 {
        extension.clamp(self.min, self.max)
    }

    pub fn contains(&self, extension: f64) -> bool {
        extension >= self.min && extension <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcavatorSpec {
    pub base_anchor: [f64; 2],
    pub link_lengths: [f64; 3],
    pub link_masses: [f64; 3],
    pub actuator_offsets: [f64; 3],
    pub actuator_slopes: [f64; 3],
    pub extension_min: [f64; 3],
    pub extension_max: [f64; 3],
    pub max_speeds: [f64; 3],
    pub actuator_time_constant: f64,
    pub machine_mass: f64,
    pub track_half_length: f64,
    pub track_half_gauge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSpec {
    pub sagitta: f64,
    pub thickness: f64,
    pub segments: usize,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub cell_size: f64,
    pub ground_z: f64,
}

impl TerrainSpec {
    pub fn build(&self) -> TerrainField {
        TerrainField::flat(self.x_min, self.x_max, self.cell_size, self.ground_z)
    }
}

/// Contact, integration and tilt constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    pub gravity: f64,
    pub friction_rock_bucket: f64,
    pub friction_rock_terrain: f64,
    pub penetration_tolerance: f64,
    pub speculative_margin: f64,
    pub solver_iterations: usize,
    pub position_iterations: usize,
    /// Lateral kick standard deviation per unit tangential velocity change (s).
    pub lateral_kick_gain: f64,
    /// Viscous drag rate of soil on a submerged rock (1/s per unit soil/rock density).
    pub soil_drag: f64,
    pub roll_decay_time: f64,
    pub tilt_limit: f64,
    pub tilt_compliance_fraction: f64,
}

/// Frozen forward-kinematics result at zero extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePose {
    pub bucket_center: [f64; 2],
    pub boom_tip: [f64; 2],
    pub bucket_pivot: [f64; 2],
    pub bucket_tip: [f64; 2],
    pub joint_angles: [f64; 3],
}

/// The complete `geometry.cfg` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub version: u32,
    pub excavator: ExcavatorSpec,
    pub bucket: BucketSpec,
    pub terrain: TerrainSpec,
    pub physics: PhysicsParams,
    pub reference: ReferencePose,
}

impl GeometryFile {
    pub const VERSION: u32 = 1;

    pub fn parse(text: &str) -> Result<Self, PhysicsError> {
        let file: GeometryFile =
            toml::from_str(text).map_err(|e| PhysicsError::Config(e.to_string()))?;
        if file.version != Self::VERSION {
            return Err(PhysicsError::Config(format!(
                "geometry.cfg version {} (expected {})",
                file.version,
                Self::VERSION
            )));
        }
        Ok(file)
    }

    pub fn default_fixture() -> Self {
        Self::parse(DEFAULT_GEOMETRY_CFG).expect("bundled geometry.cfg is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcavatorGeometry {
    pub base_anchor: Vec2,
    pub link_lengths: [f64; 3],
    pub link_masses: [f64; 3],
    pub actuators: [ActuatorMap; 3],
    pub max_speeds: [f64; 3],
    pub actuator_time_constant: f64,
    pub machine_mass: f64,
    pub track_half_length: f64,
    pub track_half_gauge: f64,
    /// Out-of-plane bucket width (m).
    pub bucket_width: f64,
    /// Closed shell outline in the bucket frame (origin at the pivot, x
    /// toward the cutting edge).
    pub bucket_polygon: Vec<Vec2>,
    /// Convex decomposition of `bucket_polygon` used for contacts.
    pub bucket_pieces: Vec<[Vec2; 4]>,
    /// Centre of the circular cavity in the bucket frame.
    pub cavity_center: Vec2,
    pub cavity_radius: f64,
}

/// Shell outline and convex pieces for a circular bucket of chord `chord`.
fn bucket_shell(chord: f64, spec: &BucketSpec) -> (Vec<Vec2>, Vec<[Vec2; 4]>, Vec2, f64) {
    let s = spec.sagitta;
    let r = (chord * chord / 4.0 + s * s) / (2.0 * s);
    let center = Vec2::new(0.5 * chord, r - s);
    let a0 = (-center.y).atan2(-center.x);
    let a1 = (-center.y).atan2(chord - center.x) + 2.0 * std::f64::consts::PI;
    let n = spec.segments;
    let ring = |radius: f64| -> Vec<Vec2> {
        (0..=n)
            .map(|i| {
                let a = a0 + (a1 - a0) * i as f64 / n as f64;
                center + Vec2::new(a.cos(), a.sin()) * radius
            })
            .collect()
    };
    let inner = ring(r);
    let outer = ring(r + spec.thickness);
    // the inner arc runs clockwise about the cavity centre when traversed
    // from pivot to edge, so outer-reversed then inner gives a CCW outline
    let mut outline: Vec<Vec2> = inner.clone();
    outline.extend(outer.iter().rev());
    if signed_area(&outline) < 0.0 {
        outline.reverse();
    }
    let pieces = (0..n)
        .map(|i| {
            let mut q = [inner[i], inner[i + 1], outer[i + 1], outer[i]];
            if signed_area(&q) < 0.0 {
                q.reverse();
            }
            q
        })
        .collect();
    (outline, pieces, center, r)
}

impl ExcavatorGeometry {
    pub fn from_spec(ex: &ExcavatorSpec, bucket: &BucketSpec) -> Result<Self, PhysicsError> {
        let actuators = std::array::from_fn(|i| ActuatorMap {
            offset: ex.actuator_offsets[i],
            slope: ex.actuator_slopes[i],
            min: ex.extension_min[i],
            max: ex.extension_max[i],
        });
        let (bucket_polygon, bucket_pieces, cavity_center, cavity_radius) =
            bucket_shell(ex.link_lengths[2], bucket);
        let g = Self {
            base_anchor: Vec2::new(ex.base_anchor[0], ex.base_anchor[1]),
            link_lengths: ex.link_lengths,
            link_masses: ex.link_masses,
            actuators,
            max_speeds: ex.max_speeds,
            actuator_time_constant: ex.actuator_time_constant,
            machine_mass: ex.machine_mass,
            track_half_length: ex.track_half_length,
            track_half_gauge: ex.track_half_gauge,
            bucket_width: bucket.width,
            bucket_polygon,
            bucket_pieces,
            cavity_center,
            cavity_radius,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_file(file: &GeometryFile) -> Result<Self, PhysicsError> {
        Self::from_spec(&file.excavator, &file.bucket)
    }

    pub fn default_fixture() -> Self {
        Self::from_file(&GeometryFile::default_fixture()).expect("bundled geometry is valid")
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (i, a) in self.actuators.iter().enumerate() {
            if a.slope == 0.0 || !a.slope.is_finite() {
                return Err(PhysicsError::Config(format!("actuator {i}: slope must be nonzero")));
            }
            if !(a.min < a.max) {
                return Err(PhysicsError::Config(format!("actuator {i}: empty extension range")));
            }
        }
        if !is_simple(&self.bucket_polygon) || signed_area(&self.bucket_polygon) <= 0.0 {
            return Err(PhysicsError::Config("bucket outline must be simple with positive area".into()));
        }
        if self.max_speeds.iter().any(|s| !(*s > 0.0)) || !(self.actuator_time_constant > 0.0) {
            return Err(PhysicsError::Config("speeds and time constant must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp_extensions(&self, q: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| self.actuators[i].clamp(q[i]))
    }

    pub fn forward_kinematics(&self, q: [f64; 3]) -> Result<Pose, PhysicsError> {
        for (i, a) in self.actuators.iter().enumerate() {
            if !q[i].is_finite() || !a.contains(q[i]) {
                return Err(PhysicsError::ExtensionOutOfRange {
                    joint: i,
                    value: q[i],
                    min: a.min,
                    max: a.max,
                });
            }
        }
        Ok(self.pose_unchecked(q))
    }

    /// Forward kinematics without the limit check.
    pub fn pose_unchecked(&self, q: [f64; 3]) -> Pose {
        let joint_angles: [f64; 3] = std::array::from_fn(|i| self.actuators[i].angle(q[i]));
        let p1 = joint_angles[0];
        let p2 = p1 + joint_angles[1];
        let p3 = p2 + joint_angles[2];
        let dir = |p: f64| Vec2::new(-p.cos(), p.sin());
        let boom_tip = self.base_anchor + dir(p1) * self.link_lengths[0];
        let bucket_pivot = boom_tip + dir(p2) * self.link_lengths[1];
        let bucket_tip = bucket_pivot + dir(p3) * self.link_lengths[2];
        // frame angle in the standard x–z orientation
        let bucket_angle = std::f64::consts::PI - p3;
        let to_world = |v: &Vec2| bucket_pivot + rotate(v, bucket_angle);
        let bucket_polygon: Vec<Vec2> = self.bucket_polygon.iter().map(to_world).collect();
        let bucket_pieces = self
            .bucket_pieces
            .iter()
            .map(|q| q.map(|v| to_world(&v)))
            .collect();
        Pose {
            joint_angles,
            link_pitch: [p1, p2, p3],
            boom_tip,
            bucket_pivot,
            bucket_tip,
            bucket_angle,
            bucket_center: centroid(&bucket_polygon),
            cavity_center: to_world(&self.cavity_center),
            bucket_polygon,
            bucket_pieces,
        }
    }
}

/// World-frame configuration of the manipulator for one set of extensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    /// Boom pitch, arm and bucket relative angles (rad).
    pub joint_angles: [f64; 3],
    /// Absolute pitch of each link above the forward horizontal.
    pub link_pitch: [f64; 3],
    pub boom_tip: Vec2,
    pub bucket_pivot: Vec2,
    pub bucket_tip: Vec2,
    /// Orientation of the bucket frame x axis (standard x–z angle).
    pub bucket_angle: f64,
    pub bucket_center: Vec2,
    pub cavity_center: Vec2,
    pub bucket_polygon: Vec<Vec2>,
    pub bucket_pieces: Vec<[Vec2; 4]>,
}

impl Pose {
    /// Unit vector out of the bucket mouth (from the cavity through the chord).
    pub fn mouth_normal(&self) -> Vec2 {
        perp(&(self.bucket_tip - self.bucket_pivot).normalize())
    }

    /// Joint pivots: boom foot, boom tip, bucket pivot.
    pub fn pivots(&self, geometry: &ExcavatorGeometry) -> [Vec2; 3] {
        [geometry.base_anchor, self.boom_tip, self.bucket_pivot]
    }
}
