//! The `rockcap` command: train, evaluate, replay logs and serve teleop
//! sessions.
//!
//! Exit codes: 0 success, 1 runtime failure (including a replay mismatch),
//! 2 usage or configuration error.

use std::fs;
use std::io::BufReader;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use rockcap_core::env::{replay, Env, EnvAssets, EnvConfig, EpisodeRecord, RecordKind, ReplayOutcome, DEFAULT_ENV_CFG};
use rockcap_core::eval::{self, run_scenario, Metrics, ScenarioConfig, ScenarioName};
use rockcap_core::nn::Checkpoint;
use rockcap_core::physics::{parse_materials, GeometryFile};
use rockcap_core::ppo::{PpoConfig, PpoError, Trainer, DEFAULT_PPO_CFG};
use rockcap_core::provenance;
use rockcap_teleop::{serve, ClockMode, ServerConfig, SessionConfig, SessionMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "rockcap", version = provenance::VERSION, about = "Planar excavator rock-capturing workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the evaluation scenarios.
    Eval(EvalArgs),
    /// Re-simulate episode logs and check them bitwise.
    Replay(ReplayArgs),
    /// Run the teleoperation service for human trials.
    Serve(ServeArgs),
}

/// Config files shared by every subcommand. Bundled defaults are used for
/// any file not given.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Environment config (episode, randomization, reward, observation).
    #[arg(long)]
    pub env_config: Option<PathBuf>,
    /// Excavator geometry, physics constants and terrain.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Soil materials.
    #[arg(long)]
    pub materials: Option<PathBuf>,
    /// Use the simplified task: rock family I at x = -9.0, fixed goal, dirt.
    #[arg(long, conflicts_with = "env_config")]
    pub simplified: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub ppo_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total environment steps; overrides the PPO config.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, required_unless_present_any = ["print_config", "human_records"])]
    pub checkpoint: Option<PathBuf>,
    /// training_condition, unseen_rocks, unseen_material, human or all.
    #[arg(long, default_value = "all")]
    pub scenario: String,
    #[arg(long, default_value_t = eval::DEFAULT_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "runs/eval")]
    pub out: PathBuf,
    /// Directory of human episode logs for the human scenario.
    #[arg(long)]
    pub human_records: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Episode logs (.jsonl).
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "practice")]
    pub mode: String,
    /// One world seed per line; built-in seeds are used otherwise.
    #[arg(long)]
    pub seed_file: Option<PathBuf>,
    /// Advance physics one step per control message instead of at 60 Hz.
    #[arg(long)]
    pub lockstep: bool,
    #[arg(long, default_value = "runs/human")]
    pub records: PathBuf,
    /// Exit after this many connections.
    #[arg(long)]
    pub max_connections: Option<usize>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn config_error(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    let what = path.map_or("bundled default".to_string(), |p| p.display().to_string());
    CliError::Usage(format!("{what}: {e}"))
}

/// Loaded environment config and assets.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub env: EnvConfig,
    pub assets: EnvAssets,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let env = match (&self.env_config, self.simplified) {
            (Some(p), _) => EnvConfig::parse(&read_text(p)?).map_err(|e| config_error(Some(p), e))?,
            (None, true) => EnvConfig::simplified(),
            (None, false) => EnvConfig::parse(DEFAULT_ENV_CFG).map_err(|e| config_error(None, e))?,
        };
        let geometry = match &self.geometry {
            Some(p) => GeometryFile::parse(&read_text(p)?).map_err(|e| config_error(Some(p), e))?,
            None => GeometryFile::default_fixture(),
        };
        let materials = match &self.materials {
            Some(p) => parse_materials(&read_text(p)?).map_err(|e| config_error(Some(p), e))?,
            None => EnvAssets::default().materials,
        };
        let assets = EnvAssets { geometry, materials };
        // catches a material name missing from the materials file
        Env::new(env.clone(), assets.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Resolved { env, assets })
    }
}

fn print_configs(r: &Resolved, ppo: Option<&PpoConfig>) {
    println!("# environment\n{}", r.env.to_toml());
    if let Some(p) = ppo {
        println!("# ppo\n{}", p.to_toml());
    }
    println!("# geometry\n{}", toml_of(&r.assets.geometry));
    println!("# materials\n{}", toml_of(&r.assets.materials));
}

fn toml_of<T: Serialize>(v: &T) -> String {
    toml::to_string(v).unwrap_or_else(|e| format!("# not representable as TOML: {e}"))
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}

#[derive(Serialize)]
struct RunInfo<'a> {
    software_version: &'a str,
    seed: u64,
    config_hash: &'a str,
    env: &'a EnvConfig,
    ppo: &'a PpoConfig,
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let r = a.config.resolve()?;
    let mut ppo = match &a.ppo_config {
        Some(p) => PpoConfig::parse(&read_text(p)?).map_err(|e| config_error(Some(p), e))?,
        None => PpoConfig::parse(DEFAULT_PPO_CFG).map_err(|e| config_error(None, e))?,
    };
    if let Some(s) = a.steps {
        ppo.total_timesteps = s;
        ppo.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if a.config.print_config {
        print_configs(&r, Some(&ppo));
        return Ok(());
    }
    let factory = |_| -> Result<Env, PpoError> { Ok(Env::new(r.env.clone(), r.assets.clone())?) };
    let mut trainer = match &a.resume {
        Some(ck) => {
            let mut t = Trainer::resume(ck, factory).map_err(runtime)?;
            t.set_total_timesteps(ppo.total_timesteps);
            t
        }
        None => Trainer::new(ppo.clone(), a.seed, factory).map_err(|e| match e {
            PpoError::Config(m) => CliError::Usage(m),
            other => runtime(other),
        })?,
    };
    fs::create_dir_all(&a.out).map_err(runtime)?;
    let info = RunInfo {
        software_version: provenance::VERSION,
        seed: trainer.state().seed,
        config_hash: trainer.config_hash(),
        env: &r.env,
        ppo: trainer.config(),
    };
    fs::write(a.out.join("run.json"), serde_json::to_vec_pretty(&info).map_err(runtime)?).map_err(runtime)?;
    trainer.set_output_dir(Some(a.out.clone()));
    let target = trainer.config().total_timesteps;
    while trainer.total_steps() < target {
        let row = trainer.iterate().map_err(runtime)?;
        let opt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
        println!(
            "steps {:>9}  episodes {:>6}  reward100 {:>10}  success100 {:>6}  kl {:.4}",
            row.total_steps,
            row.episodes,
            opt(row.mean_cumreward_100),
            opt(row.success_rate_100),
            row.stats.approx_kl
        );
    }
    trainer.save(&a.out.join("final.bin")).map_err(runtime)?;
    println!("wrote {}", a.out.join("final.bin").display());
    Ok(())
}

fn parse_scenarios(s: &str) -> Result<Vec<ScenarioName>, CliError> {
    let s = s.replace('-', "_");
    if s == "all" {
        return Ok(ScenarioName::ALL.to_vec());
    }
    s.parse::<ScenarioName>()
        .map(|n| vec![n])
        .map_err(|e| CliError::Usage(format!("{e}; expected one of training_condition, unseen_rocks, unseen_material, human, all")))
}

fn load_human_records(dir: &Path) -> Result<Vec<EpisodeRecord>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let rec = read_record(&p)?;
        if rec.header.kind == RecordKind::Human {
            out.push(rec);
        }
    }
    Ok(out)
}

fn read_record(path: &Path) -> Result<EpisodeRecord, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    EpisodeRecord::read_jsonl(BufReader::new(f)).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    software_version: &'a str,
    seed: u64,
    checkpoint: Option<String>,
    checkpoint_config_hash: Option<String>,
    env_config_hash: String,
    metrics: &'a [Metrics],
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let names = parse_scenarios(&a.scenario)?;
    if names == [ScenarioName::Human] && a.human_records.is_none() {
        return Err(CliError::Usage("the human scenario needs --human-records <dir>".into()));
    }
    let r = a.config.resolve()?;
    if a.config.print_config {
        print_configs(&r, None);
        return Ok(());
    }
    let ck = match &a.checkpoint {
        Some(p) => Some(Checkpoint::load(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut all = Vec::new();
    for name in names {
        let metrics = if name == ScenarioName::Human {
            // `all` without human logs reports the agent scenarios only
            let Some(dir) = &a.human_records else { continue };
            let records = load_human_records(dir)?;
            eval::export_figures(&records, &a.out.join("figures"), "human_").map_err(runtime)?;
            Metrics::from_records(name, &records)
        } else {
            let Some(ck) = &ck else {
                return Err(CliError::Usage(format!("scenario {name} needs --checkpoint")));
            };
            let mut sc = ScenarioConfig::preset(name);
            sc.episodes = a.episodes;
            let run = run_scenario(&sc, &r.env, &r.assets, &ck.policy, a.seed).map_err(runtime)?;
            let dir = a.out.join("records").join(name.as_str());
            fs::create_dir_all(&dir).map_err(runtime)?;
            for (i, rec) in run.records.iter().enumerate() {
                let f = fs::File::create(dir.join(format!("episode_{i:03}.jsonl"))).map_err(runtime)?;
                rec.write_jsonl(std::io::BufWriter::new(f)).map_err(runtime)?;
            }
            eval::export_figures(&run.records, &a.out.join("figures"), &format!("{name}_")).map_err(runtime)?;
            run.metrics
        };
        all.push(metrics);
    }
    let text = eval::report(&all);
    print!("{text}");
    fs::create_dir_all(&a.out).map_err(runtime)?;
    fs::write(a.out.join("report.txt"), &text).map_err(runtime)?;
    let env_hash = Env::new(r.env.clone(), r.assets.clone()).map_err(runtime)?.config_hash();
    let file = MetricsFile {
        software_version: provenance::VERSION,
        seed: a.seed,
        checkpoint: a.checkpoint.as_ref().map(|p| p.display().to_string()),
        checkpoint_config_hash: ck.as_ref().map(|c| c.meta.config_hash.clone()),
        env_config_hash: env_hash,
        metrics: &all,
    };
    fs::write(a.out.join("metrics.json"), serde_json::to_vec_pretty(&file).map_err(runtime)?).map_err(runtime)?;
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let mut failures = 0;
    for path in &a.logs {
        let rec = read_record(path)?;
        match replay(&rec).map_err(|e| runtime(format!("{}: {e}", path.display())))? {
            ReplayOutcome::Match { steps } => println!("{}: match ({steps} steps)", path.display()),
            ReplayOutcome::Diverged { step, field } => {
                failures += 1;
                println!("{}: MISMATCH at step {step} in {field}", path.display());
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!("{failures} log(s) diverged")));
    }
    Ok(())
}

pub fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let mode: SessionMode = a.mode.parse().map_err(CliError::Usage)?;
    let r = a.config.resolve()?;
    let session = match &a.seed_file {
        Some(p) => SessionConfig::from_seed_file(mode, p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => SessionConfig::with_default_seeds(mode),
    };
    if a.config.print_config {
        print_configs(&r, None);
        println!("# session\nmode = {:?}\ntrials = {}", mode.as_str(), session.trials);
        return Ok(());
    }
    let listener = TcpListener::bind(("127.0.0.1", a.port))
        .map_err(|e| runtime(format!("cannot listen on port {}: {e}", a.port)))?;
    eprintln!(
        "serving {} session ({} trials) on ws://{}",
        mode.as_str(),
        session.trials,
        listener.local_addr().map_err(runtime)?
    );
    let cfg = ServerConfig {
        env: r.env,
        assets: r.assets,
        session,
        clock: if a.lockstep { ClockMode::Lockstep } else { ClockMode::Realtime },
        record_dir: Some(a.records.clone()),
        max_connections: a.max_connections,
    };
    for report in serve(listener, &cfg).map_err(runtime)? {
        let s = report.summary;
        println!(
            "session: {} completed, {} successes, {} aborted, success rate {:.2}",
            s.completed, s.successes, s.aborted, s.success_rate
        );
    }
    Ok(())
}
