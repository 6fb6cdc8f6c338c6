use std::net::TcpListener;
use std::path::Path;

use rockcap_cli::{run_from, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use rockcap_core::env::{Env, EnvAssets, EnvConfig, EpisodeRecord, RecordKind};

fn run(args: &[&str]) -> i32 {
    run_from(std::iter::once("rockcap").chain(args.iter().copied()))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_log(dir: &Path, name: &str, horizon: usize) -> std::path::PathBuf {
    let mut cfg = EnvConfig::default();
    cfg.horizon = horizon;
    let mut env = Env::new(cfg, EnvAssets::default()).unwrap();
    env.set_recording(Some(RecordKind::Agent));
    env.reset(Some(9)).unwrap();
    while !env.is_done() {
        env.step(&[0.4, -0.6, 0.2]).unwrap();
    }
    let p = dir.join(name);
    env.take_record().unwrap().write_jsonl(std::fs::File::create(&p).unwrap()).unwrap();
    p
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["train", "--seed", "minus-one"]), EXIT_USAGE);
    assert_eq!(run(&["train", "--env-config", "/definitely/missing.cfg", "--print-config"]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--scenario", "mars", "--checkpoint", "x.bin"]), EXIT_USAGE);
    assert_eq!(run(&["serve", "--mode", "tournament", "--print-config"]), EXIT_USAGE);
    assert_eq!(run(&["replay"]), EXIT_USAGE);
}

#[test]
fn invalid_config_values_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("ppo.cfg");
    let text = rockcap_core::ppo::DEFAULT_PPO_CFG.replace("minibatch_size = 128", "minibatch_size = 100");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(run(&["train", "--ppo-config", path(&bad), "--print-config"]), EXIT_USAGE);
    let env = dir.path().join("env.cfg");
    std::fs::write(&env, "not = [valid").unwrap();
    assert_eq!(run(&["train", "--env-config", path(&env), "--print-config"]), EXIT_USAGE);
}

#[test]
fn print_config_succeeds_for_every_subcommand() {
    assert_eq!(run(&["train", "--print-config"]), EXIT_OK);
    assert_eq!(run(&["train", "--simplified", "--print-config"]), EXIT_OK);
    assert_eq!(run(&["eval", "--print-config"]), EXIT_OK);
    assert_eq!(run(&["serve", "--mode", "evaluation", "--print-config"]), EXIT_OK);
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(run(&["--help"]), EXIT_OK);
    assert_eq!(run(&["--version"]), EXIT_OK);
}

#[test]
fn replay_reports_mismatch_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_log(dir.path(), "good.jsonl", 40);
    assert_eq!(run(&["replay", path(&good)]), EXIT_OK);

    let f = std::fs::File::open(&good).unwrap();
    let mut rec = EpisodeRecord::read_jsonl(std::io::BufReader::new(f)).unwrap();
    rec.steps[17].raw_obs[3] = f64::from_bits(rec.steps[17].raw_obs[3].to_bits() ^ 1);
    let bad = dir.path().join("bad.jsonl");
    rec.write_jsonl(std::fs::File::create(&bad).unwrap()).unwrap();
    assert_eq!(run(&["replay", path(&bad)]), EXIT_RUNTIME);
    assert_eq!(run(&["replay", path(&good), path(&bad)]), EXIT_RUNTIME);
    assert_eq!(run(&["replay", path(&dir.path().join("absent.jsonl"))]), EXIT_USAGE);
}

#[test]
fn serve_on_a_busy_port_is_a_runtime_error() {
    let busy = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    assert_eq!(run(&["serve", "--port", &port, "--lockstep"]), EXIT_RUNTIME);
}

#[test]
fn train_writes_provenance_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let ppo = dir.path().join("ppo.cfg");
    let text = rockcap_core::ppo::DEFAULT_PPO_CFG
        .replace("n_steps_per_env = 2048", "n_steps_per_env = 64")
        .replace("n_envs = 4", "n_envs = 2")
        .replace("checkpoint_every = 10", "checkpoint_every = 1");
    std::fs::write(&ppo, text).unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--ppo-config", path(&ppo), "--steps", "256", "--seed", "4", "--out", path(&out)]), EXIT_OK);
    for f in ["run.json", "curve.csv", "final.bin", "final.state.json", "latest.bin"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let info: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(info["seed"], 4);
    assert_eq!(info["config_hash"].as_str().unwrap().len(), 64);
    assert!(info["software_version"].is_string());
    assert_eq!(std::fs::read_to_string(out.join("curve.csv")).unwrap().lines().count(), 1 + 2);

    let resumed = dir.path().join("resumed");
    assert_eq!(
        run(&[
            "train",
            "--ppo-config",
            path(&ppo),
            "--steps",
            "512",
            "--resume",
            path(&out.join("final.bin")),
            "--out",
            path(&resumed),
        ]),
        EXIT_OK
    );
    let curve = std::fs::read_to_string(resumed.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 4);
    assert!(curve.lines().last().unwrap().starts_with("512,"));
}

#[test]
fn resume_from_a_missing_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&["train", "--resume", path(&dir.path().join("nope.bin")), "--out", path(dir.path())]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn eval_needs_a_checkpoint_or_human_logs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["eval", "--scenario", "unseen-rocks", "--out", path(dir.path())]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--scenario", "human", "--checkpoint", "x.bin"]), EXIT_USAGE);
    assert_eq!(run(&["eval", "--checkpoint", path(&dir.path().join("x.bin")), "--out", path(dir.path())]), EXIT_RUNTIME);
}

#[test]
fn human_scenario_scores_logged_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("human");
    std::fs::create_dir_all(&logs).unwrap();
    let mut env = Env::new(EnvConfig::default(), EnvAssets::default()).unwrap();
    for seed in 0..3 {
        env.set_recording(Some(RecordKind::Human));
        env.reset(Some(seed)).unwrap();
        while !env.is_done() {
            env.step(&[0.0, 1.0, -1.0]).unwrap();
        }
        let rec = env.take_record().unwrap();
        rec.write_jsonl(std::fs::File::create(logs.join(format!("t{seed}.jsonl"))).unwrap()).unwrap();
    }
    // agent logs in the same folder are ignored
    write_log(&logs, "agent.jsonl", 10);
    let out = dir.path().join("eval");
    assert_eq!(
        run(&["eval", "--scenario", "human", "--human-records", path(&logs), "--out", path(&out)]),
        EXIT_OK
    );
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["metrics"][0]["episodes"].as_array().unwrap().len(), 3);
    assert_eq!(m["metrics"][0]["scenario"], "human");
    assert!(out.join("figures/human_trajectory.csv").exists());
}

#[test]
fn served_trial_is_logged_and_replays() {
    use rockcap_teleop::{Client, ClientMessage, KeyStates, ServerMessage};

    let dir = tempfile::tempdir().unwrap();
    let records = dir.path().join("human");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let args: Vec<String> = [
        "serve",
        "--port",
        &port.to_string(),
        "--lockstep",
        "--mode",
        "evaluation",
        "--max-connections",
        "1",
        "--records",
        path(&records),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let server = std::thread::spawn(move || run(&args.iter().map(String::as_str).collect::<Vec<_>>()));

    let addr = format!("127.0.0.1:{port}");
    let mut attempt = 0;
    let (mut client, hello) = loop {
        match Client::connect(&addr) {
            Ok(c) => break c,
            Err(_) if attempt < 100 => {
                attempt += 1;
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
            Err(e) => panic!("server never came up: {e}"),
        }
    };
    assert!(matches!(hello, ServerMessage::Hello { trials: 10, .. }));
    client.send(&ClientMessage::Start).unwrap();
    assert!(matches!(client.recv().unwrap(), ServerMessage::Frame(_)));
    let keys = KeyStates {
        arm_down: true,
        ..KeyStates::default()
    };
    let result = loop {
        client.control(keys, 0.0).unwrap();
        match client.recv().unwrap() {
            ServerMessage::Frame(_) => {}
            ServerMessage::Result(r) => break r,
            other => panic!("unexpected {other:?}"),
        }
    };
    client.close();
    assert_eq!(server.join().unwrap(), EXIT_OK);

    let log = result.record_path.expect("record written");
    assert!(log.starts_with(path(&records)));
    assert_eq!(run(&["replay", &log]), EXIT_OK);
}
