//! Evaluation scenarios, episode metrics, curve smoothing and CSV exports
//! for plotting.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    episode_success, seed_stream, Env, EnvAssets, EnvConfig, EnvError, EpisodeRecord, RecordKind,
    ACT_DIM, OBS_DIM,
};
use crate::nn::GaussianPolicy;
use crate::physics::RockFamily;

/// Smoothing weight applied to training curves.
pub const SMOOTHING_WEIGHT: f64 = 0.9;
pub const DEFAULT_EPISODES: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("policy expects {policy_obs} observations and {policy_act} actions, environment has {OBS_DIM} and {ACT_DIM}")]
    Mismatch { policy_obs: usize, policy_act: usize },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("scenario {0} needs recorded human sessions, not a policy")]
    NeedsHuman(ScenarioName),
    #[error("smoothing weight {0} outside [0, 1]")]
    Weight(f64),
    #[error("record schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    TrainingCondition,
    UnseenRocks,
    UnseenMaterial,
    Human,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::TrainingCondition,
        ScenarioName::UnseenRocks,
        ScenarioName::UnseenMaterial,
        ScenarioName::Human,
    ];
    /// Scenarios that run a trained policy.
    pub const AGENT: [ScenarioName; 3] = [
        ScenarioName::TrainingCondition,
        ScenarioName::UnseenRocks,
        ScenarioName::UnseenMaterial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::TrainingCondition => "training_condition",
            ScenarioName::UnseenRocks => "unseen_rocks",
            ScenarioName::UnseenMaterial => "unseen_material",
            ScenarioName::Human => "human",
        }
    }

    /// Published success rate, shown beside ours for comparison only.
    pub fn reference_success_rate(self) -> f64 {
        match self {
            ScenarioName::TrainingCondition => 0.9,
            ScenarioName::UnseenRocks => 0.8,
            ScenarioName::UnseenMaterial => 0.7,
            ScenarioName::Human => 0.6,
        }
    }

    /// Published cumulative reward mean and std, where one exists.
    pub fn reference_cumreward(self) -> Option<(f64, f64)> {
        match self {
            ScenarioName::TrainingCondition => Some((1428.47, 611.13)),
            ScenarioName::UnseenRocks => Some((1195.84, 745.17)),
            ScenarioName::UnseenMaterial => Some((952.04, 779.10)),
            ScenarioName::Human => None,
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| EvalError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub rock_families: Vec<RockFamily>,
    /// Key into the materials file.
    pub material: String,
    pub episodes: usize,
}

impl ScenarioConfig {
    pub fn preset(name: ScenarioName) -> Self {
        let (families, material) = match name {
            ScenarioName::TrainingCondition | ScenarioName::Human => (vec![RockFamily::I, RockFamily::II], "dirt"),
            ScenarioName::UnseenRocks => (vec![RockFamily::III, RockFamily::IV], "dirt"),
            ScenarioName::UnseenMaterial => (vec![RockFamily::I, RockFamily::II], "sand"),
        };
        Self {
            name,
            rock_families: families,
            material: material.into(),
            episodes: DEFAULT_EPISODES,
        }
    }

    /// The training configuration with only the rock families and the
    /// material replaced.
    pub fn apply(&self, base: &EnvConfig) -> EnvConfig {
        let mut cfg = base.clone();
        cfg.randomization.rock_families = self.rock_families.clone();
        cfg.material = self.material.clone();
        cfg
    }
}

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub rock_family: RockFamily,
    pub steps: usize,
    pub cumulative_reward: f64,
    pub success: bool,
    pub truncated: bool,
}

impl EpisodeSummary {
    pub fn from_record(r: &EpisodeRecord) -> Self {
        Self {
            seed: r.header.seed,
            rock_family: r.header.rock_family,
            steps: r.steps.len(),
            cumulative_reward: r.cumulative_reward(),
            success: episode_success(&r.goal_flags()),
            truncated: r.steps.last().is_some_and(|s| s.truncated),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: ScenarioName,
    pub success_rate: f64,
    pub cumreward_mean: f64,
    /// Sample standard deviation; zero for fewer than two episodes.
    pub cumreward_std: f64,
    pub episodes: Vec<EpisodeSummary>,
}

impl Metrics {
    pub fn from_summaries(scenario: ScenarioName, episodes: Vec<EpisodeSummary>) -> Self {
        let n = episodes.len();
        let successes = episodes.iter().filter(|e| e.success).count();
        let rewards: Vec<f64> = episodes.iter().map(|e| e.cumulative_reward).collect();
        let (mean, std) = mean_and_sample_std(&rewards);
        Self {
            scenario,
            success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
            cumreward_mean: mean,
            cumreward_std: std,
            episodes,
        }
    }

    pub fn from_records(scenario: ScenarioName, records: &[EpisodeRecord]) -> Self {
        Self::from_summaries(scenario, records.iter().map(EpisodeSummary::from_record).collect())
    }

    pub fn successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }
}

pub fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub struct ScenarioRun {
    pub metrics: Metrics,
    pub records: Vec<EpisodeRecord>,
}

/// Runs the scenario's episodes with the policy mean as the action. Episode
/// seeds come from a stream derived from `seed`, so runs repeat exactly.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    base: &EnvConfig,
    assets: &EnvAssets,
    policy: &GaussianPolicy,
    seed: u64,
) -> Result<ScenarioRun, EvalError> {
    if scenario.name == ScenarioName::Human {
        return Err(EvalError::NeedsHuman(scenario.name));
    }
    if policy.mean.input_dim() != OBS_DIM || policy.act_dim() != ACT_DIM {
        return Err(EvalError::Mismatch {
            policy_obs: policy.mean.input_dim(),
            policy_act: policy.act_dim(),
        });
    }
    let mut env = Env::new(scenario.apply(base), assets.clone())?;
    env.set_recording(Some(RecordKind::Agent));
    let mut seeds = seed_stream(seed, 0);
    let mut records = Vec::with_capacity(scenario.episodes);
    for _ in 0..scenario.episodes {
        let mut obs = env.reset(Some(seeds.next_u64()))?;
        loop {
            let mean = policy.mean_action(&obs).map_err(|e| EvalError::Schema(e.to_string()))?;
            let r = env.step(&[mean[0], mean[1], mean[2]])?;
            obs = r.obs;
            if r.done() {
                break;
            }
        }
        records.push(env.take_record().expect("recording enabled"));
    }
    Ok(ScenarioRun {
        metrics: Metrics::from_records(scenario.name, &records),
        records,
    })
}

/// Exponential smoothing `s(0) = x(0)`, `s(t) = w s(t-1) + (1 - w) x(t)`.
pub fn smooth(series: &[f64], w: f64) -> Result<Vec<f64>, EvalError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(EvalError::Weight(w));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut s = 0.0;
    for (t, &x) in series.iter().enumerate() {
        s = if t == 0 { x } else { w * s + (1.0 - w) * x };
        out.push(s);
    }
    Ok(out)
}

/// One line per scenario, laid out like the published results table.
pub fn report(metrics: &[Metrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>12} {:>28} {:>14} {:>24}",
        "Evaluation scenario", "Episodes", "Success rate", "Cumulative reward", "Reference SR", "Reference reward"
    );
    for m in metrics {
        let reference = m
            .scenario
            .reference_cumreward()
            .map_or_else(|| "-".to_string(), |(a, b)| format!("{a:.2} ± {b:.2}"));
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>12.2} {:>28} {:>14.1} {:>24}",
            m.scenario.as_str(),
            m.episodes.len(),
            m.success_rate,
            format!("{:.2} ± {:.2}", m.cumreward_mean, m.cumreward_std),
            m.scenario.reference_success_rate(),
            reference
        );
    }
    out
}

pub const TRAJECTORY_HEADER: &str = "episode,step,time,x_rock,z_rock,x_bucket,z_bucket,x_goal,z_goal,goal_half_width";
pub const COMMANDS_HEADER: &str = "episode,step,time,boom_speed,arm_speed,bucket_speed";
pub const TILT_HEADER: &str = "episode,step,time,theta,phi,tilt_limit";

/// Paths written by [`export_figures`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub trajectory: PathBuf,
    pub commands: PathBuf,
    pub tilt: PathBuf,
}

/// Writes trajectory, joint-command and tilt tables for plotting, one row per
/// logged step, with `prefix` naming the files.
pub fn export_figures(records: &[EpisodeRecord], dir: &Path, prefix: &str) -> Result<ExportPaths, EvalError> {
    fs::create_dir_all(dir)?;
    let paths = ExportPaths {
        trajectory: dir.join(format!("{prefix}trajectory.csv")),
        commands: dir.join(format!("{prefix}commands.csv")),
        tilt: dir.join(format!("{prefix}tilt.csv")),
    };
    let mut traj = std::io::BufWriter::new(fs::File::create(&paths.trajectory)?);
    let mut cmd = std::io::BufWriter::new(fs::File::create(&paths.commands)?);
    let mut tilt = std::io::BufWriter::new(fs::File::create(&paths.tilt)?);
    writeln!(traj, "{TRAJECTORY_HEADER}")?;
    writeln!(cmd, "{COMMANDS_HEADER}")?;
    writeln!(tilt, "{TILT_HEADER}")?;
    for (e, r) in records.iter().enumerate() {
        let half = r.header.env.reward.delta_prox;
        let limit = r.header.env.reward.delta_tilt;
        for s in &r.steps {
            if s.raw_obs.len() != OBS_DIM {
                return Err(EvalError::Schema(format!(
                    "episode {e} step {} has {} observation fields",
                    s.step,
                    s.raw_obs.len()
                )));
            }
            let o = &s.raw_obs;
            writeln!(
                traj,
                "{e},{},{},{},{},{},{},{},{},{half}",
                s.step, s.sim_time, o[11], o[12], o[9], o[10], o[13], o[14]
            )?;
            writeln!(cmd, "{e},{},{},{},{},{}", s.step, s.sim_time, s.speeds[0], s.speeds[1], s.speeds[2])?;
            writeln!(tilt, "{e},{},{},{},{},{limit}", s.step, s.sim_time, o[15], o[16])?;
        }
    }
    traj.flush()?;
    cmd.flush()?;
    tilt.flush()?;
    Ok(paths)
}
