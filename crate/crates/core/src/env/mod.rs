//! Goal-conditioned rock-capturing episodes on top of the planar world.
//!
//! [`Env`] owns one episode at a time. Every episode is fully determined by
//! its configuration and a `u64` seed: the seed drives the initial-state
//! draw and the physics noise.

pub mod config;
pub mod init;
pub mod obs;
pub mod record;
pub mod reward;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{EnvConfig, Randomization, RewardWeights, DEFAULT_ENV_CFG};
pub use init::{initial_extensions, project_goal, sample_initial, InitialSample};
pub use obs::{clip_unit, scale_action, ObsBounds, Observation, ACT_DIM, OBS_DIM, OBS_NAMES};
pub use record::{replay, EpisodeHeader, EpisodeRecord, RecordKind, ReplayOutcome, StepRecord};
pub use reward::{
    c_goal, c_proximity, c_tilting, c_truncate, goal_reward, guidance_reward, total_reward,
    Conditions, RewardInputs, RewardTerms,
};

use crate::physics::{
    self, parse_materials, rock_on_terrain_spawn, ExcavatorGeometry, GeometryFile, PhysicsError,
    RockShape, Scene, SoilMaterial, WorldState, DEFAULT_MATERIALS_CFG,
};
use crate::provenance;

/// Control period (s).
pub const DT: f64 = 1.0 / 60.0;

/// Steps at the end of an episode inspected by the held-at-goal rule.
pub const HOLD_WINDOW: usize = 60;
/// In-goal steps within [`HOLD_WINDOW`] that count as holding the rock.
pub const HOLD_MIN_STEPS: usize = 30;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("config: {0}")]
    Config(String),
    #[error("reset requires an explicit seed")]
    MissingSeed,
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("step called before reset")]
    NotReset,
    #[error("log: {0}")]
    Record(String),
    #[error("log schema version {found} (expected {expected})")]
    RecordVersion { found: u64, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Success rule for a finished episode: the goal condition holds on the
/// final step, or on at least half of the last [`HOLD_WINDOW`] steps.
pub fn episode_success(goal_flags: &[bool]) -> bool {
    let Some(&last) = goal_flags.last() else {
        return false;
    };
    let tail = &goal_flags[goal_flags.len().saturating_sub(HOLD_WINDOW)..];
    last || tail.iter().filter(|&&g| g).count() >= HOLD_MIN_STEPS
}

/// Geometry fixture plus the named soil materials.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvAssets {
    pub geometry: GeometryFile,
    pub materials: BTreeMap<String, SoilMaterial>,
}

impl Default for EnvAssets {
    fn default() -> Self {
        Self {
            geometry: GeometryFile::default_fixture(),
            materials: parse_materials(DEFAULT_MATERIALS_CFG).expect("bundled materials are valid"),
        }
    }
}

impl EnvAssets {
    pub fn single(geometry: GeometryFile, name: &str, material: SoilMaterial) -> Self {
        Self {
            geometry,
            materials: BTreeMap::from([(name.to_string(), material)]),
        }
    }
}

/// Per-environment stream of episode seeds derived from a global seed.
pub fn seed_stream(global_seed: u64, env_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(env_index);
    rng
}

/// Outcome of one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Normalized observation after the step.
    pub obs: [f64; OBS_DIM],
    pub raw_obs: Observation,
    pub reward: f64,
    /// The horizon was reached.
    pub terminated: bool,
    /// The rock became inaccessible.
    pub truncated: bool,
    pub conditions: Conditions,
    pub terms: RewardTerms,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
struct Episode {
    seed: u64,
    scene: Scene,
    state: WorldState,
    goal: [f64; 2],
    sample: InitialSample,
    rng: ChaCha8Rng,
    t: usize,
    prev_action: [f64; 3],
    done: bool,
    last_conditions: Conditions,
}

#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    geometry_file: GeometryFile,
    geometry: ExcavatorGeometry,
    material: SoilMaterial,
    config_hash: String,
    episode: Option<Episode>,
    record_kind: Option<RecordKind>,
    record: Option<EpisodeRecord>,
}

impl Env {
    pub fn new(config: EnvConfig, assets: EnvAssets) -> Result<Self, EnvError> {
        config.validate()?;
        let material = assets
            .materials
            .get(&config.material)
            .cloned()
            .ok_or_else(|| EnvError::Config(format!("unknown material {:?}", config.material)))?;
        material.validate()?;
        let geometry = ExcavatorGeometry::from_file(&assets.geometry)?;
        let config_hash = provenance::hash_json(&(&config, &assets.geometry, &material));
        Ok(Self {
            config,
            geometry_file: assets.geometry,
            geometry,
            material,
            config_hash,
            episode: None,
            record_kind: None,
            record: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn geometry(&self) -> &ExcavatorGeometry {
        &self.geometry
    }

    pub fn material(&self) -> &SoilMaterial {
        &self.material
    }

    /// Hash of the configuration, geometry and material.
    pub fn config_hash(&self) -> String {
        self.config_hash.clone()
    }

    /// Enables per-step logging of subsequent episodes.
    pub fn set_recording(&mut self, kind: Option<RecordKind>) {
        self.record_kind = kind;
        if kind.is_none() {
            self.record = None;
        }
    }

    /// Log of the current episode, if recording.
    pub fn record(&self) -> Option<&EpisodeRecord> {
        self.record.as_ref()
    }

    pub fn take_record(&mut self) -> Option<EpisodeRecord> {
        self.record.take()
    }

    /// Starts a new episode. A seed is mandatory.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<[f64; OBS_DIM], EnvError> {
        let seed = seed.ok_or(EnvError::MissingSeed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_initial(&self.config.randomization, &mut rng);
        let rock = RockShape::new(sample.family, sample.density)?;
        let scene = Scene::new(
            self.geometry.clone(),
            self.geometry_file.physics.clone(),
            self.material.clone(),
            rock,
        )?;
        let terrain = self.geometry_file.terrain.build();
        let pose = rock_on_terrain_spawn(&scene.rock, sample.rock_x, &terrain)?;
        let ext = self.geometry.clamp_extensions(initial_extensions(sample.rock_x));
        let mut state = WorldState::new(&scene, ext, pose, terrain)?;
        for _ in 0..self.config.settle_steps {
            physics::step(&mut state, &scene, [0.0; 3], DT, &mut rng);
        }
        state.sim_time = 0.0;

        let mut ep = Episode {
            seed,
            scene,
            state,
            goal: sample.goal,
            sample,
            rng,
            t: 0,
            prev_action: [0.0; 3],
            done: false,
            last_conditions: Conditions::default(),
        };
        ep.last_conditions = self.conditions(&ep);
        let raw = self.observe(&ep);
        self.record = self.record_kind.map(|kind| EpisodeRecord {
            header: EpisodeHeader {
                schema_version: record::RECORD_SCHEMA_VERSION,
                kind,
                seed,
                config_hash: self.config_hash.clone(),
                software_version: provenance::VERSION.to_string(),
                env: self.config.clone(),
                geometry: self.geometry_file.clone(),
                material: self.material.clone(),
                goal: ep.goal,
                rock_family: ep.sample.family,
                rock_density: ep.sample.density,
                rock_x: ep.sample.rock_x,
                initial_obs: raw.to_array().to_vec(),
            },
            steps: Vec::new(),
        });
        self.episode = Some(ep);
        Ok(self.config.observation.normalize(&raw.to_array()))
    }

    /// Advances one control step with a normalized action.
    pub fn step(&mut self, action: &[f64; ACT_DIM]) -> Result<StepResult, EnvError> {
        let mut ep = self.episode.take().ok_or(EnvError::NotReset)?;
        if ep.done {
            self.episode = Some(ep);
            return Err(EnvError::EpisodeOver);
        }
        let a: [f64; 3] = std::array::from_fn(|i| clip_unit(action[i]));
        let speeds = scale_action(&a, &self.geometry.max_speeds);
        physics::step(&mut ep.state, &ep.scene, speeds, DT, &mut ep.rng);
        ep.t += 1;

        let cond = self.conditions(&ep);
        let raw = self.observe(&ep);
        let cap = self.force_cap();
        let input = RewardInputs {
            rock: raw.rock,
            goal: ep.goal,
            action: a,
            forces: std::array::from_fn(|i| raw.f[i].clamp(-cap[i], cap[i])),
            prev_action: ep.prev_action,
            theta: raw.theta,
            phi: raw.phi,
        };
        let terms = RewardTerms::compute(&input, cond.goal, &self.config.reward);
        let reward = terms.total();
        let terminated = ep.t >= self.config.horizon;
        let truncated = cond.truncate;
        ep.prev_action = a;
        ep.done = terminated || truncated;
        ep.last_conditions = cond;

        let raw_arr = raw.to_array();
        let obs = self.config.observation.normalize(&raw_arr);
        if let Some(rec) = self.record.as_mut() {
            rec.steps.push(StepRecord {
                step: ep.t - 1,
                sim_time: ep.state.sim_time,
                raw_obs: raw_arr.to_vec(),
                obs: obs.to_vec(),
                action: a,
                speeds,
                reward,
                terms: terms.to_array(),
                c_proximity: cond.proximity,
                c_tilting: cond.tilting,
                c_goal: cond.goal,
                truncated,
                terminated,
            });
        }
        self.episode = Some(ep);
        Ok(StepResult {
            obs,
            raw_obs: raw,
            reward,
            terminated,
            truncated,
            conditions: cond,
            terms,
        })
    }

    /// Force magnitudes (kN) at which the reward saturates: the observation
    /// bounds of the force components.
    fn force_cap(&self) -> [f64; 3] {
        let b = &self.config.observation;
        std::array::from_fn(|i| b.min[6 + i].abs().max(b.max[6 + i].abs()))
    }

    fn conditions(&self, ep: &Episode) -> Conditions {
        let w = &self.config.reward;
        let rock = [ep.state.rock_pose.x, ep.state.rock_pose.z];
        let proximity = c_proximity(rock, ep.goal, w.delta_prox);
        let tilting = c_tilting(ep.state.cabin_pitch, ep.state.cabin_roll, w.delta_tilt);
        Conditions {
            proximity,
            tilting,
            goal: c_goal(proximity, tilting),
            truncate: c_truncate(rock[0], ep.state.rock_lateral_y, w),
        }
    }

    fn observe(&self, ep: &Episode) -> Observation {
        let s = &ep.state;
        let pose = s.pose(&self.geometry);
        Observation {
            q: s.actuator_ext,
            v: s.actuator_vel,
            f: s.joint_forces,
            bucket: [pose.bucket_center.x, pose.bucket_center.y],
            rock: [s.rock_pose.x, s.rock_pose.z],
            goal: ep.goal,
            theta: s.cabin_pitch,
            phi: s.cabin_roll,
        }
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Steps taken in the current episode.
    pub fn step_count(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.t)
    }

    pub fn seed(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.seed)
    }

    pub fn goal(&self) -> Option<[f64; 2]> {
        self.episode.as_ref().map(|e| e.goal)
    }

    pub fn initial_sample(&self) -> Option<InitialSample> {
        self.episode.as_ref().map(|e| e.sample)
    }

    pub fn last_conditions(&self) -> Option<Conditions> {
        self.episode.as_ref().map(|e| e.last_conditions)
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.episode.as_ref().map(|e| &e.scene)
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.episode.as_ref().map(|e| &e.state)
    }

    /// Mutable access to the live world, for tests and tools that inject
    /// states.
    pub fn world_mut(&mut self) -> Option<&mut WorldState> {
        self.episode.as_mut().map(|e| &mut e.state)
    }

    /// Raw observation of the current state.
    pub fn raw_observation(&self) -> Option<Observation> {
        self.episode.as_ref().map(|e| self.observe(e))
    }

    /// Draws the next `u64` from `rng`; the usual way to seed episodes from
    /// a [`seed_stream`].
    pub fn next_seed(rng: &mut ChaCha8Rng) -> u64 {
        rng.next_u64()
    }
}
