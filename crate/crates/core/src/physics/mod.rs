//! Deterministic planar (x–z) world: excavator linkage, polygonal rock and a
//! deformable height-field terrain, stepped at a fixed rate.

pub mod contact;
pub mod geometry;
pub mod rock;
pub mod soil;
pub mod terrain;
pub mod world;

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

pub use geometry::{ExcavatorGeometry, GeometryFile, PhysicsParams, Pose};
pub use rock::{rock_on_terrain_spawn, RockFamily, RockPose, RockShape};
pub use soil::{soil_reaction, SoilMaterial, SoilReaction};
pub use terrain::TerrainField;
pub use world::{penetration, step, Scene, StepReport, WorldState};

pub const DEFAULT_MATERIALS_CFG: &str = include_str!("../../fixtures/materials.cfg");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("x = {x} lies outside the terrain span [{min}, {max}]")]
    OutsideTerrain { x: f64, min: f64, max: f64 },
    #[error("extension {value} of joint {joint} outside [{min}, {max}]")]
    ExtensionOutOfRange {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid rock: {0}")]
    InvalidRock(String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Deserialize)]
struct MaterialsFile {
    version: u32,
    #[serde(flatten)]
    materials: BTreeMap<String, SoilMaterial>,
}

/// Parses a `materials.cfg` document into named materials.
pub fn parse_materials(text: &str) -> Result<BTreeMap<String, SoilMaterial>, PhysicsError> {
    let file: MaterialsFile =
        toml::from_str(text).map_err(|e| PhysicsError::Config(e.to_string()))?;
    if file.version != 1 {
        return Err(PhysicsError::Config(format!(
            "materials.cfg version {} (expected 1)",
            file.version
        )));
    }
    for m in file.materials.values() {
        m.validate()?;
    }
    Ok(file.materials)
}
