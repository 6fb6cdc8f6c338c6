//! Trial bookkeeping for one operator: seeds, key state, stepping, frames,
//! results and human-tagged episode logs. Transport independent.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::RngCore;

use rockcap_core::env::{
    episode_success, scale_action, seed_stream, Env, EnvAssets, EnvConfig, EpisodeRecord, RecordKind,
};

use crate::protocol::{
    ClockMode, FrameConditions, KeyStates, ServerMessage, SessionMode, SessionSummary, StateFrame, TrialInfo,
    TrialResult, PROTOCOL_VERSION,
};
use crate::TeleopError;

pub const PHYSICS_HZ: f64 = 60.0;
pub const FRAME_HZ: f64 = 20.0;
/// Physics steps between streamed frames.
pub const STEPS_PER_FRAME: usize = 3;
/// Fixed base for the default seed lists, so every participant faces the
/// same worlds in the same order.
pub const SESSION_SEED_BASE: u64 = 0x5EED_0044;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub mode: SessionMode,
    pub trials: usize,
    /// World seed of trial `i` is `seeds[i]`.
    pub seeds: Vec<u64>,
}

impl SessionConfig {
    pub fn new(mode: SessionMode, seeds: Vec<u64>) -> Result<Self, TeleopError> {
        let trials = mode.default_trials();
        if seeds.len() < trials {
            return Err(TeleopError::Session(format!(
                "{} mode needs {trials} seeds, got {}",
                mode.as_str(),
                seeds.len()
            )));
        }
        Ok(Self { mode, trials, seeds })
    }

    /// Built-in seed list, identical for every session of a mode.
    pub fn with_default_seeds(mode: SessionMode) -> Self {
        let stream = match mode {
            SessionMode::Practice => 0,
            SessionMode::Evaluation => 1,
        };
        let mut rng = seed_stream(SESSION_SEED_BASE, stream);
        let seeds = (0..mode.default_trials()).map(|_| rng.next_u64()).collect();
        Self::new(mode, seeds).expect("enough seeds")
    }

    pub fn from_seed_file(mode: SessionMode, path: &Path) -> Result<Self, TeleopError> {
        Self::new(mode, parse_seed_list(&fs::read_to_string(path)?)?)
    }
}

/// One unsigned integer per line; blank lines and `#` comments are ignored.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, TeleopError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.parse::<u64>()
                .map_err(|e| TeleopError::Session(format!("seed file line {}: {e}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Running {
    trial: usize,
    seed: u64,
    cumulative_reward: f64,
    goal_flags: Vec<bool>,
}

/// What a physics step produced.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    /// No trial is running.
    Idle,
    Continue,
    Ended(TrialResult),
}

pub struct Session {
    env: Env,
    config: SessionConfig,
    next_trial: usize,
    running: Option<Running>,
    results: Vec<TrialResult>,
    records: Vec<EpisodeRecord>,
    aborted: usize,
    keys: KeyStates,
    command: [f64; 3],
    frame_id: u64,
    record_dir: Option<PathBuf>,
    tag: String,
}

impl Session {
    /// `tag` prefixes the log file names written to `record_dir`.
    pub fn new(
        env_config: EnvConfig,
        assets: EnvAssets,
        config: SessionConfig,
        record_dir: Option<PathBuf>,
        tag: &str,
    ) -> Result<Self, TeleopError> {
        let mut env = Env::new(env_config, assets)?;
        env.set_recording(Some(RecordKind::Human));
        Ok(Self {
            env,
            config,
            next_trial: 0,
            running: None,
            results: Vec::new(),
            records: Vec::new(),
            aborted: 0,
            keys: KeyStates::default(),
            command: [0.0; 3],
            frame_id: 0,
            record_dir,
            tag: tag.to_string(),
        })
    }

    pub fn hello(&self, clock: ClockMode) -> ServerMessage {
        ServerMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            mode: self.config.mode,
            trials: self.config.trials,
            clock,
            physics_hz: PHYSICS_HZ,
            frame_hz: FRAME_HZ,
            key_names: KeyStates::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.running.is_none() && self.next_trial >= self.config.trials
    }

    pub fn keys(&self) -> KeyStates {
        self.keys
    }

    /// Latest key state wins; it stays applied until replaced.
    pub fn set_keys(&mut self, keys: KeyStates) {
        self.keys = keys;
    }

    fn trial_info(&self, index: usize) -> TrialInfo {
        TrialInfo {
            mode: self.config.mode,
            index,
            total: self.config.trials,
        }
    }

    /// Begins the next trial and returns its first frame.
    pub fn start_trial(&mut self) -> Result<StateFrame, TeleopError> {
        if self.running.is_some() {
            return Err(TeleopError::Session("a trial is already running".into()));
        }
        if self.is_finished() {
            return Err(TeleopError::Session("all trials are complete".into()));
        }
        let trial = self.next_trial;
        let seed = self.config.seeds[trial];
        self.env.reset(Some(seed))?;
        self.keys = KeyStates::default();
        self.command = [0.0; 3];
        self.running = Some(Running {
            trial,
            seed,
            cumulative_reward: 0.0,
            goal_flags: Vec::new(),
        });
        Ok(self.frame())
    }

    /// Advances physics one step with the current keys.
    pub fn step(&mut self) -> Result<StepEvent, TeleopError> {
        let Some(run) = self.running.as_mut() else {
            return Ok(StepEvent::Idle);
        };
        let action = self.keys.action();
        self.command = scale_action(&action, &self.env.geometry().max_speeds);
        let r = self.env.step(&action)?;
        run.cumulative_reward += r.reward;
        run.goal_flags.push(r.conditions.goal);
        if !r.done() {
            return Ok(StepEvent::Continue);
        }
        let run = self.running.take().expect("running");
        let record = self.env.take_record().expect("recording enabled");
        let record_path = match &self.record_dir {
            Some(dir) => Some(self.write_record(dir, run.trial, &record)?),
            None => None,
        };
        let result = TrialResult {
            trial: self.trial_info(run.trial),
            seed: run.seed,
            success: episode_success(&run.goal_flags),
            cumulative_reward: run.cumulative_reward,
            steps: run.goal_flags.len(),
            truncated: r.truncated,
            record_path: record_path.map(|p| p.display().to_string()),
        };
        self.records.push(record);
        self.results.push(result.clone());
        self.next_trial += 1;
        self.env.set_recording(Some(RecordKind::Human));
        Ok(StepEvent::Ended(result))
    }

    fn write_record(&self, dir: &Path, trial: usize, record: &EpisodeRecord) -> Result<PathBuf, TeleopError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}_{}_{trial:03}.jsonl", self.tag, self.config.mode.as_str()));
        record.write_jsonl(BufWriter::new(fs::File::create(&path)?))?;
        Ok(path)
    }

    /// Abandons the running trial. It is not counted and the same trial,
    /// with the same seed, is offered again.
    pub fn abort(&mut self) -> bool {
        if self.running.take().is_some() {
            self.aborted += 1;
            self.keys = KeyStates::default();
            self.env.set_recording(Some(RecordKind::Human));
            true
        } else {
            false
        }
    }

    pub fn results(&self) -> &[TrialResult] {
        &self.results
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn summary(&self) -> SessionSummary {
        let completed = self.results.len();
        let successes = self.results.iter().filter(|r| r.success).count();
        let mean = if completed == 0 {
            0.0
        } else {
            self.results.iter().map(|r| r.cumulative_reward).sum::<f64>() / completed as f64
        };
        SessionSummary {
            mode: self.config.mode,
            completed,
            successes,
            aborted: self.aborted,
            success_rate: if completed == 0 { 0.0 } else { successes as f64 / completed as f64 },
            cumulative_reward_mean: mean,
        }
    }

    /// Snapshot of the current scene. Frame ids increase by one per call.
    pub fn frame(&mut self) -> StateFrame {
        self.frame_id += 1;
        let pt = |v: &rockcap_core::geom::Vec2| [v.x, v.y];
        let env = &self.env;
        let world = env.world().expect("frames are built after the first reset");
        let scene = env.scene().expect("frames are built after the first reset");
        let pose = world.pose(env.geometry());
        let obs = env.raw_observation().expect("reset done");
        let cond = env.last_conditions();
        let cfg = env.config();
        let index = self.running.as_ref().map_or(self.next_trial.saturating_sub(1), |r| r.trial);
        StateFrame {
            frame_id: self.frame_id,
            sim_time: world.sim_time,
            step: env.step_count(),
            horizon: cfg.horizon,
            joint_angles: pose.joint_angles,
            linkage: pose
                .pivots(env.geometry())
                .iter()
                .chain(std::iter::once(&pose.bucket_tip))
                .map(pt)
                .collect(),
            bucket_polygon: pose.bucket_polygon.iter().map(pt).collect(),
            rock_polygon: scene.rock_polygon(&world.rock_pose).iter().map(pt).collect(),
            rock_com: [world.rock_pose.x, world.rock_pose.z],
            rock_com_displayable: false,
            terrain_x_origin: world.terrain.x_origin,
            terrain_spacing: world.terrain.cell_size,
            terrain_heights: world.terrain.heights.clone(),
            goal: obs.goal,
            goal_half_width: cfg.reward.delta_prox,
            theta: obs.theta,
            phi: obs.phi,
            tilt_limit: cfg.reward.delta_tilt,
            conditions: FrameConditions {
                proximity: cond.is_some_and(|c| c.proximity),
                tilting: cond.is_some_and(|c| c.tilting),
                goal: cond.is_some_and(|c| c.goal),
            },
            cumulative_reward: self.running.as_ref().map_or(0.0, |r| r.cumulative_reward),
            command: self.command,
            trial: self.trial_info(index),
        }
    }
}
