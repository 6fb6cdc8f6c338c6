//! Rock fixtures and spawning.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::terrain::TerrainField;
use super::PhysicsError;
use crate::geom::{centroid, is_convex, polar_moment, signed_area, Vec2};

/// Height of the lowest possible rock point above the ground at spawn.
pub const SPAWN_ELEVATION: f64 = 0.5;

/// Out-of-plane thickness shared by all fixtures (m).
pub const EFFECTIVE_DEPTH: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RockFamily {
    I,
    II,
    III,
    IV,
}

impl RockFamily {
    pub const ALL: [RockFamily; 4] = [RockFamily::I, RockFamily::II, RockFamily::III, RockFamily::IV];

    /// Outline as (angle °, radius m) pairs, counter-clockwise.
    fn outline(self) -> &'static [(f64, f64)] {
        match self {
            // blocky, roughly equant
            RockFamily::I => &[
                (0.0, 0.52),
                (50.0, 0.48),
                (105.0, 0.55),
                (160.0, 0.47),
                (210.0, 0.53),
                (265.0, 0.50),
                (315.0, 0.49),
            ],
            // elongated slab
            RockFamily::II => &[
                (0.0, 0.62),
                (35.0, 0.50),
                (80.0, 0.42),
                (130.0, 0.47),
                (175.0, 0.60),
                (215.0, 0.50),
                (265.0, 0.41),
                (315.0, 0.46),
            ],
            // angular wedge
            RockFamily::III => &[
                (10.0, 0.55),
                (95.0, 0.50),
                (170.0, 0.56),
                (235.0, 0.47),
                (300.0, 0.52),
            ],
            // flat boulder
            RockFamily::IV => &[
                (0.0, 0.64),
                (40.0, 0.44),
                (90.0, 0.38),
                (140.0, 0.44),
                (180.0, 0.63),
                (225.0, 0.45),
                (270.0, 0.39),
                (320.0, 0.46),
            ],
        }
    }

    /// Convex fixture polygon with its centroid at the origin.
    pub fn vertices(self) -> Vec<Vec2> {
        let raw: Vec<Vec2> = self
            .outline()
            .iter()
            .map(|&(deg, r)| {
                let a = deg.to_radians();
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let c = centroid(&raw);
        raw.into_iter().map(|v| v - c).collect()
    }

    pub fn is_training(self) -> bool {
        matches!(self, RockFamily::I | RockFamily::II)
    }
}

impl fmt::Display for RockFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RockFamily::I => "I",
            RockFamily::II => "II",
            RockFamily::III => "III",
            RockFamily::IV => "IV",
        };
        f.write_str(s)
    }
}

impl FromStr for RockFamily {
    type Err = PhysicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "1" => Ok(RockFamily::I),
            "II" | "2" => Ok(RockFamily::II),
            "III" | "3" => Ok(RockFamily::III),
            "IV" | "4" => Ok(RockFamily::IV),
            other => Err(PhysicsError::InvalidRock(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RockShape {
    pub vertices: Vec<Vec2>,
    /// kg/m³
    pub density: f64,
    /// m
    pub effective_depth: f64,
    pub family: RockFamily,
}

impl RockShape {
    pub fn new(family: RockFamily, density: f64) -> Result<Self, PhysicsError> {
        let rock = Self {
            vertices: family.vertices(),
            density,
            effective_depth: EFFECTIVE_DEPTH,
            family,
        };
        rock.validate()?;
        Ok(rock)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.vertices.len() < 3 || !is_convex(&self.vertices) || signed_area(&self.vertices) <= 0.0 {
            return Err(PhysicsError::InvalidRock(
                "outline must be convex and counter-clockwise".into(),
            ));
        }
        if !(self.density > 0.0 && self.effective_depth > 0.0) {
            return Err(PhysicsError::InvalidRock(format!(
                "density {} and depth {} must be positive",
                self.density, self.effective_depth
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn mass(&self) -> f64 {
        self.density * self.area() * self.effective_depth
    }

    /// Moment of inertia about the centre of mass (kg·m²).
    pub fn inertia(&self) -> f64 {
        self.density * self.effective_depth * polar_moment(&self.vertices)
    }

    /// Largest vertex distance from the centre of mass.
    pub fn clearance_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Rock pose in the base frame: (x, z, angle).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RockPose {
    pub x: f64,
    pub z: f64,
    pub angle: f64,
}

impl RockPose {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.z)
    }
}

/// Places the rock above the terrain at `x` so that no part of it is lower
/// than the spawn elevation above the local ground height.
pub fn rock_on_terrain_spawn(
    rock: &RockShape,
    x: f64,
    terrain: &TerrainField,
) -> Result<RockPose, PhysicsError> {
    let ground = terrain.checked_height(x)?;
    Ok(RockPose {
        x,
        z: ground + SPAWN_ELEVATION + rock.clearance_radius(),
        angle: 0.0,
    })
}
