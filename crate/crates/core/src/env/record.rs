//! Line-delimited episode logs and bitwise replay.
//!
//! A log is one JSON header line followed by one JSON line per step. The
//! header embeds the full configuration so a log can be replayed on its own.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::obs::OBS_DIM;
use super::{Env, EnvAssets, EnvError};
use crate::physics::{GeometryFile, RockFamily, SoilMaterial};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Agent,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema_version: u32,
    pub kind: RecordKind,
    pub seed: u64,
    pub config_hash: String,
    pub software_version: String,
    pub env: EnvConfig,
    pub geometry: GeometryFile,
    pub material: SoilMaterial,
    pub goal: [f64; 2],
    pub rock_family: RockFamily,
    pub rock_density: f64,
    pub rock_x: f64,
    /// Raw observation after the settle phase.
    pub initial_obs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub sim_time: f64,
    pub raw_obs: Vec<f64>,
    pub obs: Vec<f64>,
    /// Clipped normalized action.
    pub action: [f64; 3],
    /// Commanded joint speeds (m/s).
    pub speeds: [f64; 3],
    pub reward: f64,
    /// position_x, position_z, energy, smoothness, tilt, goal.
    pub terms: [f64; 6],
    pub c_proximity: bool,
    pub c_tilting: bool,
    pub c_goal: bool,
    pub truncated: bool,
    pub terminated: bool,
}

impl StepRecord {
    /// Name of the first field that differs from `other`.
    pub fn first_difference(&self, other: &StepRecord) -> Option<&'static str> {
        let bits = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        if self.step != other.step {
            Some("step")
        } else if !bits(&[self.sim_time], &[other.sim_time]) {
            Some("sim_time")
        } else if !bits(&self.action, &other.action) {
            Some("action")
        } else if !bits(&self.speeds, &other.speeds) {
            Some("speeds")
        } else if !bits(&self.raw_obs, &other.raw_obs) {
            Some("raw_obs")
        } else if !bits(&self.obs, &other.obs) {
            Some("obs")
        } else if !bits(&[self.reward], &[other.reward]) {
            Some("reward")
        } else if !bits(&self.terms, &other.terms) {
            Some("terms")
        } else if (self.c_proximity, self.c_tilting, self.c_goal)
            != (other.c_proximity, other.c_tilting, other.c_goal)
        {
            Some("conditions")
        } else if (self.truncated, self.terminated) != (other.truncated, other.terminated) {
            Some("episode_end")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn cumulative_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn goal_flags(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.c_goal).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), EnvError> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, EnvError> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| EnvError::Record("empty log".into()))??;
        let value: serde_json::Value = serde_json::from_str(&first)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| EnvError::Record("header lacks schema_version".into()))?;
        if version != RECORD_SCHEMA_VERSION as u64 {
            return Err(EnvError::RecordVersion {
                found: version,
                expected: RECORD_SCHEMA_VERSION,
            });
        }
        let header: EpisodeHeader = serde_json::from_value(value)?;
        let mut steps = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line)?);
        }
        Ok(Self { header, steps })
    }
}

/// Result of re-simulating a log.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayOutcome {
    Match { steps: usize },
    Diverged {
        step: usize,
        field: &'static str,
    },
}

impl ReplayOutcome {
    pub fn is_match(&self) -> bool {
        matches!(self, ReplayOutcome::Match { .. })
    }
}

/// Re-runs the logged seed and actions and compares every field bitwise.
pub fn replay(record: &EpisodeRecord) -> Result<ReplayOutcome, EnvError> {
    let h = &record.header;
    let assets = EnvAssets::single(h.geometry.clone(), &h.env.material, h.material.clone());
    let mut env = Env::new(h.env.clone(), assets)?;
    let hash = env.config_hash();
    if hash != h.config_hash {
        return Err(EnvError::Record(format!(
            "config hash {} does not match the embedded configuration ({hash})",
            h.config_hash
        )));
    }
    env.set_recording(Some(h.kind));
    env.reset(Some(h.seed))?;
    let fresh_header = env.record().expect("recording enabled").header.clone();
    if fresh_header.initial_obs.len() != OBS_DIM
        || !same_header_state(&fresh_header, h)
    {
        return Ok(ReplayOutcome::Diverged {
            step: 0,
            field: "initial_state",
        });
    }
    for (i, logged) in record.steps.iter().enumerate() {
        if env.is_done() {
            return Ok(ReplayOutcome::Diverged {
                step: i,
                field: "episode_end",
            });
        }
        env.step(&logged.action)?;
        let fresh = env.record().expect("recording enabled").steps.last().expect("step recorded");
        if let Some(field) = fresh.first_difference(logged) {
            return Ok(ReplayOutcome::Diverged { step: i, field });
        }
    }
    Ok(ReplayOutcome::Match {
        steps: record.steps.len(),
    })
}

fn same_header_state(a: &EpisodeHeader, b: &EpisodeHeader) -> bool {
    let bits = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    };
    bits(&a.goal, &b.goal)
        && bits(&[a.rock_density, a.rock_x], &[b.rock_density, b.rock_x])
        && a.rock_family == b.rock_family
        && bits(&a.initial_obs, &b.initial_obs)
}
