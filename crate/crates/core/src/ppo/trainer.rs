//! Rollout collection, clipped updates, training curve and resumable
//! checkpoints.
//!
//! A checkpoint is the binary network file plus a JSON sidecar with the
//! trainer state. Environments are not serialized: each one records its
//! episode seed and the actions taken so far, and resuming replays them.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::gae::Boundary;
use super::loss::{clip_grad_norm, clipped_surrogate, clipped_surrogate_grad, normalize_advantages, success_rate};
use super::{Environment, PpoConfig, PpoError, METRIC_WINDOW};
use crate::env::{episode_success, seed_stream};
use crate::nn::{Adam, Checkpoint, CheckpointMeta, GaussianPolicy, Tape, ValueNet};
use crate::provenance;

pub const CURVE_HEADER: &str = "total_steps,iteration,episodes,mean_cumreward_100,success_rate_100,policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm,wall_time";

const STATE_VERSION: u32 = 1;
/// Stream ids for the trainer's own generators, far from environment ids.
const INIT_STREAM: u64 = 1 << 40;
const TRAIN_STREAM: u64 = (1 << 40) + 1;

/// Loss statistics of one update, averaged over its minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
}

/// One line of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub total_steps: u64,
    pub iteration: u64,
    pub episodes: u64,
    /// `None` until an episode has finished.
    pub mean_cumreward_100: Option<f64>,
    pub success_rate_100: Option<f64>,
    pub stats: UpdateStats,
    pub wall_time: f64,
}

impl CurveRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let s = &self.stats;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.total_steps,
            self.iteration,
            self.episodes,
            opt(self.mean_cumreward_100),
            opt(self.success_rate_100),
            s.policy_loss,
            s.value_loss,
            s.entropy,
            s.approx_kl,
            s.clip_fraction,
            s.grad_norm,
            self.wall_time
        )
    }

    /// Same row ignoring wall-clock time.
    pub fn same_run_as(&self, other: &CurveRow) -> bool {
        CurveRow {
            wall_time: 0.0,
            ..*self
        }
        .to_csv()
            == CurveRow {
                wall_time: 0.0,
                ..*other
            }
            .to_csv()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SlotState {
    stream: ChaCha8Rng,
    episode_seed: u64,
    actions: Vec<Vec<f64>>,
}

/// Everything besides the networks needed to continue a run bitwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerState {
    pub version: u32,
    pub config: PpoConfig,
    pub seed: u64,
    pub config_hash: String,
    pub iteration: u64,
    pub total_steps: u64,
    pub episodes: u64,
    rng: ChaCha8Rng,
    slots: Vec<SlotState>,
    recent: Vec<(f64, bool)>,
    pub curve: Vec<CurveRow>,
}

struct Slot {
    state: SlotState,
    obs: Vec<f64>,
    ep_return: f64,
    goals: Vec<bool>,
}

pub struct Trainer<E: Environment> {
    cfg: PpoConfig,
    seed: u64,
    config_hash: String,
    envs: Vec<E>,
    slots: Vec<Slot>,
    pub policy: GaussianPolicy,
    pub value: ValueNet,
    policy_opt: Adam,
    value_opt: Adam,
    rng: ChaCha8Rng,
    iteration: u64,
    total_steps: u64,
    episodes: u64,
    recent: VecDeque<(f64, bool)>,
    curve: Vec<CurveRow>,
    buffer: RolloutBuffer,
    wall_offset: f64,
    started: Instant,
    out_dir: Option<PathBuf>,
}

fn start_slot<E: Environment>(env: &mut E, mut stream: ChaCha8Rng) -> Result<Slot, PpoError> {
    let episode_seed = rand::RngCore::next_u64(&mut stream);
    let obs = env.reset(episode_seed)?;
    Ok(Slot {
        state: SlotState {
            stream,
            episode_seed,
            actions: Vec::new(),
        },
        obs,
        ep_return: 0.0,
        goals: Vec::new(),
    })
}

impl<E: Environment> Trainer<E> {
    /// Fresh run. `factory(i)` builds environment `i`.
    pub fn new<F>(cfg: PpoConfig, seed: u64, mut factory: F) -> Result<Self, PpoError>
    where
        F: FnMut(usize) -> Result<E, PpoError>,
    {
        cfg.validate()?;
        let mut envs = (0..cfg.n_envs).map(&mut factory).collect::<Result<Vec<E>, _>>()?;
        let (obs_dim, act_dim) = (envs[0].obs_dim(), envs[0].act_dim());
        let config_hash = Self::hash(&cfg, &envs[0]);
        let mut init = seed_stream(seed, INIT_STREAM);
        let policy = GaussianPolicy::new(obs_dim, &cfg.hidden, act_dim, &mut init);
        let value = ValueNet::new(obs_dim, &cfg.hidden, &mut init);
        let slots = envs
            .iter_mut()
            .enumerate()
            .map(|(i, env)| start_slot(env, seed_stream(seed, i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            policy_opt: Adam::new(policy.num_params(), cfg.learning_rate),
            value_opt: Adam::new(value.net.num_params(), cfg.learning_rate),
            buffer: RolloutBuffer::new(cfg.n_envs, cfg.n_steps_per_env, obs_dim, act_dim),
            rng: seed_stream(seed, TRAIN_STREAM),
            cfg,
            seed,
            config_hash,
            envs,
            slots,
            policy,
            value,
            iteration: 0,
            total_steps: 0,
            episodes: 0,
            recent: VecDeque::new(),
            curve: Vec::new(),
            wall_offset: 0.0,
            started: Instant::now(),
            out_dir: None,
        })
    }

    fn hash(cfg: &PpoConfig, env: &E) -> String {
        provenance::hash_json(&(cfg, env.config_hash()))
    }

    /// Continues the run saved at `checkpoint`. The environments must be
    /// built from the same configuration.
    pub fn resume<F>(checkpoint: &Path, mut factory: F) -> Result<Self, PpoError>
    where
        F: FnMut(usize) -> Result<E, PpoError>,
    {
        let ck = Checkpoint::load(checkpoint)?;
        let state: TrainerState = serde_json::from_slice(&fs::read(sidecar_path(checkpoint))?)?;
        if state.version != STATE_VERSION {
            return Err(PpoError::Resume(format!("trainer state version {}", state.version)));
        }
        let cfg = state.config.clone();
        cfg.validate()?;
        let mut envs = (0..cfg.n_envs).map(&mut factory).collect::<Result<Vec<E>, _>>()?;
        let hash = Self::hash(&cfg, &envs[0]);
        if hash != state.config_hash || ck.meta.config_hash != state.config_hash {
            return Err(PpoError::Resume(
                "environment or PPO configuration differs from the checkpoint".into(),
            ));
        }
        if state.slots.len() != envs.len() {
            return Err(PpoError::Resume("environment count differs".into()));
        }
        let mut slots = Vec::new();
        for (env, s) in envs.iter_mut().zip(state.slots) {
            let mut obs = env.reset(s.episode_seed)?;
            let mut ep_return = 0.0;
            let mut goals = Vec::new();
            for a in &s.actions {
                let tr = env.step(a)?;
                ep_return += tr.reward;
                goals.push(tr.goal);
                obs = tr.obs;
            }
            slots.push(Slot {
                state: s,
                obs,
                ep_return,
                goals,
            });
        }
        let (obs_dim, act_dim) = (envs[0].obs_dim(), envs[0].act_dim());
        let wall_offset = state.curve.last().map_or(0.0, |r| r.wall_time);
        Ok(Self {
            buffer: RolloutBuffer::new(cfg.n_envs, cfg.n_steps_per_env, obs_dim, act_dim),
            cfg,
            seed: state.seed,
            config_hash: state.config_hash,
            envs,
            slots,
            policy: ck.policy,
            value: ck.value,
            policy_opt: ck.policy_opt,
            value_opt: ck.value_opt,
            rng: state.rng,
            iteration: state.iteration,
            total_steps: state.total_steps,
            episodes: state.episodes,
            recent: state.recent.into_iter().collect(),
            curve: state.curve,
            wall_offset,
            started: Instant::now(),
            out_dir: None,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn set_total_timesteps(&mut self, steps: u64) {
        self.cfg.total_timesteps = steps;
    }

    /// Directory for the curve, checkpoints and failure dumps.
    pub fn set_output_dir(&mut self, dir: Option<PathBuf>) {
        self.out_dir = dir;
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Rollout storage of the last collection.
    pub fn buffer(&self) -> &RolloutBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut RolloutBuffer {
        &mut self.buffer
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Returns and success flags of the most recent finished episodes.
    pub fn recent_episodes(&self) -> Vec<(f64, bool)> {
        self.recent.iter().copied().collect()
    }

    /// Runs until `total_timesteps` transitions have been collected.
    pub fn run(&mut self) -> Result<(), PpoError> {
        while self.total_steps < self.cfg.total_timesteps {
            self.iterate()?;
        }
        if let Some(dir) = self.out_dir.clone() {
            self.save(&dir.join("final.bin"))?;
        }
        Ok(())
    }

    /// One collect–advantage–update cycle.
    pub fn iterate(&mut self) -> Result<CurveRow, PpoError> {
        self.collect()?;
        let stats = self.update()?;
        self.iteration += 1;
        let window: Vec<(f64, bool)> = self.recent.iter().copied().collect();
        let row = CurveRow {
            total_steps: self.total_steps,
            iteration: self.iteration,
            episodes: self.episodes,
            mean_cumreward_100: (!window.is_empty())
                .then(|| window.iter().map(|w| w.0).sum::<f64>() / window.len() as f64),
            success_rate_100: (!window.is_empty())
                .then(|| success_rate(&window.iter().map(|w| w.1).collect::<Vec<_>>())),
            stats,
            wall_time: self.wall_offset + self.started.elapsed().as_secs_f64(),
        };
        self.curve.push(row);
        if let Some(dir) = self.out_dir.clone() {
            fs::create_dir_all(&dir)?;
            self.write_curve(&dir.join("curve.csv"))?;
            if self.iteration.is_multiple_of(self.cfg.checkpoint_every) {
                self.save(&dir.join("latest.bin"))?;
            }
        }
        Ok(row)
    }

    pub fn write_curve(&self, path: &Path) -> Result<(), PpoError> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(f, "{CURVE_HEADER}")?;
        for r in &self.curve {
            writeln!(f, "{}", r.to_csv())?;
        }
        f.flush()?;
        Ok(())
    }

    /// Fills the buffer with one rollout and computes its advantages.
    pub fn collect(&mut self) -> Result<(), PpoError> {
        self.buffer.clear();
        for _ in 0..self.cfg.n_steps_per_env {
            for e in 0..self.envs.len() {
                let slot = &mut self.slots[e];
                let sample = self.policy.sample(&slot.obs, &mut self.rng)?;
                let value = self.value.value(&slot.obs)?;
                let tr = self.envs[e].step(&sample.action)?;
                slot.state.actions.push(sample.action.clone());
                slot.ep_return += tr.reward;
                slot.goals.push(tr.goal);
                let boundary = if tr.terminal {
                    Boundary::Terminal
                } else if tr.truncated {
                    Boundary::Truncated(self.value.value(&tr.obs)?)
                } else {
                    Boundary::Continue
                };
                self.buffer
                    .push(e, &slot.obs, &sample.action, sample.log_prob, value, tr.reward, boundary)?;
                self.total_steps += 1;
                if tr.terminal || tr.truncated {
                    self.episodes += 1;
                    self.recent.push_back((slot.ep_return, episode_success(&slot.goals)));
                    while self.recent.len() > METRIC_WINDOW {
                        self.recent.pop_front();
                    }
                    let stream = slot.state.stream.clone();
                    *slot = start_slot(&mut self.envs[e], stream)?;
                } else {
                    slot.obs = tr.obs;
                }
            }
        }
        let bootstrap = self
            .slots
            .iter()
            .map(|s| self.value.value(&s.obs))
            .collect::<Result<Vec<_>, _>>()?;
        self.buffer
            .compute_advantages(&bootstrap, self.cfg.gamma, self.cfg.gae_lambda)
    }

    /// Runs the configured epochs of minibatch updates over the buffer.
    pub fn update(&mut self) -> Result<UpdateStats, PpoError> {
        let n = self.buffer.len();
        let mb = self.cfg.minibatch_size;
        let mut order: Vec<usize> = (0..n).collect();
        let mut acc = UpdateStats::default();
        let mut batches = 0;
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(mb) {
                let s = self.minibatch(chunk)?;
                acc.policy_loss += s.policy_loss;
                acc.value_loss += s.value_loss;
                acc.entropy += s.entropy;
                acc.approx_kl += s.approx_kl;
                acc.clip_fraction += s.clip_fraction;
                acc.grad_norm += s.grad_norm;
                batches += 1;
            }
        }
        let k = batches.max(1) as f64;
        Ok(UpdateStats {
            policy_loss: acc.policy_loss / k,
            value_loss: acc.value_loss / k,
            entropy: acc.entropy / k,
            approx_kl: acc.approx_kl / k,
            clip_fraction: acc.clip_fraction / k,
            grad_norm: acc.grad_norm / k,
        })
    }

    fn minibatch(&mut self, idx: &[usize]) -> Result<UpdateStats, PpoError> {
        let cfg = &self.cfg;
        let b = &self.buffer;
        let m = idx.len() as f64;
        let mut adv: Vec<f64> = idx.iter().map(|&i| b.advantages[i]).collect();
        normalize_advantages(&mut adv);

        let mut gp = vec![0.0; self.policy.num_params()];
        let mut gv = vec![0.0; self.value.net.num_params()];
        let mut tape = Tape::default();
        let (mut surr_sum, mut mse_sum, mut kl_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
        for (k, &i) in idx.iter().enumerate() {
            let obs = b.obs_at(i);
            let action = b.action_at(i);
            self.policy.mean.forward_tape(obs, &mut tape)?;
            let mean = tape.output().expect("forward recorded");
            let lp = crate::nn::diag_gaussian_log_prob(action, mean, &self.policy.log_std());
            let old = b.log_probs[i];
            surr_sum += clipped_surrogate(lp, old, adv[k], cfg.clip_range);
            let g = clipped_surrogate_grad(lp, old, adv[k], cfg.clip_range);
            if ((lp - old).exp() - 1.0).abs() > cfg.clip_range {
                clipped += 1;
            }
            kl_sum += old - lp;
            if g != 0.0 {
                self.policy.accumulate_log_prob_grad(&tape, action, -g / m, &mut gp)?;
            }

            self.value.net.forward_tape(obs, &mut tape)?;
            let v = tape.output().expect("forward recorded")[0];
            let err = v - b.returns[i];
            mse_sum += err * err;
            self.value.net.backward(&tape, &[2.0 * cfg.vf_coef * err / m], &mut gv)?;
        }
        let entropy = self.policy.entropy();
        self.policy.accumulate_entropy_grad(-cfg.entropy_coef, &mut gp);

        let policy_loss = -surr_sum / m;
        let value_loss = mse_sum / m;
        let loss = policy_loss + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy;
        let grads_finite = gp.iter().chain(&gv).all(|x| x.is_finite());
        if !loss.is_finite() || !grads_finite {
            let dump = self.dump_minibatch(idx, &adv)?;
            return Err(PpoError::NonFinite {
                iteration: self.iteration,
                dump,
            });
        }
        let grad_norm = clip_grad_norm(&mut [&mut gp, &mut gv], cfg.max_grad_norm);

        let mut p = self.policy.flat_params();
        self.policy_opt.step(&mut p, &gp)?;
        self.policy.set_flat_params(&p)?;
        self.policy.clamp_log_std();
        self.value_opt.step(self.value.net.params_mut(), &gv)?;

        Ok(UpdateStats {
            policy_loss,
            value_loss,
            entropy,
            approx_kl: kl_sum / m,
            clip_fraction: clipped as f64 / m,
            grad_norm,
        })
    }

    fn dump_minibatch(&self, idx: &[usize], adv: &[f64]) -> Result<String, PpoError> {
        #[derive(Serialize)]
        struct Dump<'a> {
            iteration: u64,
            indices: &'a [usize],
            obs: Vec<&'a [f64]>,
            actions: Vec<&'a [f64]>,
            old_log_probs: Vec<f64>,
            normalized_advantages: &'a [f64],
            returns: Vec<f64>,
            log_std: &'a [f64],
        }
        let b = &self.buffer;
        let dump = Dump {
            iteration: self.iteration,
            indices: idx,
            obs: idx.iter().map(|&i| b.obs_at(i)).collect(),
            actions: idx.iter().map(|&i| b.action_at(i)).collect(),
            old_log_probs: idx.iter().map(|&i| b.log_probs[i]).collect(),
            normalized_advantages: adv,
            returns: idx.iter().map(|&i| b.returns[i]).collect(),
            log_std: &self.policy.log_std,
        };
        let dir = self.out_dir.clone().unwrap_or_else(std::env::temp_dir);
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("nonfinite_minibatch_{}.json", self.iteration));
        // non-finite numbers become null in JSON, which is what we want to see
        fs::write(&path, serde_json::to_vec_pretty(&dump)?)?;
        Ok(path.display().to_string())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                total_steps: self.total_steps,
                seed: self.seed,
                config_hash: self.config_hash.clone(),
                software_version: provenance::VERSION.to_string(),
            },
            policy: self.policy.clone(),
            value: self.value.clone(),
            policy_opt: self.policy_opt.clone(),
            value_opt: self.value_opt.clone(),
        }
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            version: STATE_VERSION,
            config: self.cfg.clone(),
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            iteration: self.iteration,
            total_steps: self.total_steps,
            episodes: self.episodes,
            rng: self.rng.clone(),
            slots: self.slots.iter().map(|s| s.state.clone()).collect(),
            recent: self.recent.iter().copied().collect(),
            curve: self.curve.clone(),
        }
    }

    /// Writes the checkpoint at `path` and the trainer state beside it.
    pub fn save(&self, path: &Path) -> Result<(), PpoError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        self.checkpoint().save(path)?;
        fs::write(sidecar_path(path), serde_json::to_vec(&self.state())?)?;
        Ok(())
    }
}

/// Trainer-state file stored next to a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("state.json")
}

/// Reproducible generator for tools that need one outside the trainer.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
