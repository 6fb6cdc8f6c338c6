use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rockcap_core::env::init::INITIAL_CONFIGURATIONS;
use rockcap_core::env::reward::reward_lower_bound;
use rockcap_core::env::*;

fn env_with(cfg: EnvConfig) -> Env {
    Env::new(cfg, EnvAssets::default()).unwrap()
}

#[test]
fn reset_without_seed_is_rejected() {
    let mut env = env_with(EnvConfig::default());
    assert!(matches!(env.reset(None), Err(EnvError::MissingSeed)));
    assert!(matches!(env.step(&[0.0; 3]), Err(EnvError::NotReset)));
}

#[test]
fn same_seed_same_episode_start() {
    let mut a = env_with(EnvConfig::default());
    let mut b = env_with(EnvConfig::default());
    let oa = a.reset(Some(42)).unwrap();
    let ob = b.reset(Some(42)).unwrap();
    assert_eq!(oa, ob);
    assert_eq!(a.world(), b.world());
    assert_eq!(a.goal(), b.goal());
    let oc = b.reset(Some(43)).unwrap();
    assert_ne!(oa, oc);
}

#[test]
fn spawn_x_selects_the_initial_configuration_row() {
    let mut cfg = EnvConfig::default();
    cfg.randomization.fixed_rock_x = Some(-10.2);
    let mut env = env_with(cfg);
    env.reset(Some(1)).unwrap();
    // zero commands during the settle phase leave the extensions untouched
    assert_eq!(env.world().unwrap().actuator_ext, [-0.03, -0.39, -0.70]);
    let rock_x = env.world().unwrap().rock_pose.x;
    assert!((rock_x + 10.2).abs() < 0.05, "rock drifted to {rock_x}");
}

#[test]
fn initial_configuration_lookup_has_exact_breakpoints() {
    let rows = [
        [0.13, 0.24, -0.88],
        [0.08, 0.11, -0.80],
        [0.06, -0.03, -0.74],
        [0.03, -0.15, -0.74],
        [-0.01, -0.33, -0.70],
        [-0.03, -0.39, -0.70],
        [-0.10, -0.57, -0.70],
        [-0.10, -0.70, -0.70],
        [-0.16, -0.80, -0.78],
    ];
    let bounds = [-8.0, -8.5, -9.0, -9.5, -10.0, -10.5, -11.0, -11.5];
    for (k, &b) in bounds.iter().enumerate() {
        assert_eq!(initial_extensions(b), rows[k], "at {b}");
        let below = b - 1e-9;
        assert_eq!(initial_extensions(below), rows[k + 1], "just below {b}");
    }
    assert_eq!(initial_extensions(-0.5), rows[0]);
    assert_eq!(initial_extensions(-40.0), rows[8]);
    assert_eq!(INITIAL_CONFIGURATIONS.len(), 9);
}

proptest! {
    #[test]
    fn lookup_is_total_and_piecewise_constant(x in -14.0..-6.0f64) {
        let q = initial_extensions(x);
        let idx = INITIAL_CONFIGURATIONS.iter().position(|(_, r)| *r == q);
        prop_assert!(idx.is_some());
        // constant across the bracket containing x
        let lo = INITIAL_CONFIGURATIONS[idx.unwrap()].0;
        if lo.is_finite() {
            prop_assert_eq!(initial_extensions(lo), q);
        }
    }
}

#[test]
fn goal_projection_example() {
    let g = project_goal([-6.6, 1.5], [-7.0, 1.5], 0.3);
    assert!((g[0] + 6.7).abs() < 1e-12);
    assert!((g[1] - 1.5).abs() < 1e-12);
    assert_eq!(project_goal([-7.1, 1.45], [-7.0, 1.5], 0.3), [-7.1, 1.45]);
}

#[test]
fn goal_samples_stay_in_the_disc_and_centre_on_the_mean() {
    let spec = Randomization::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let (mut sx, mut sz) = (0.0, 0.0);
    for _ in 0..n {
        let s = sample_initial(&spec, &mut rng);
        let d = (s.goal[0] + 7.0).hypot(s.goal[1] - 1.5);
        assert!(d <= 0.3 + 1e-9, "goal {:?} at {d}", s.goal);
        assert!((-11.5..-8.0).contains(&s.rock_x));
        assert!(spec.rock_families.contains(&s.family));
        sx += s.goal[0];
        sz += s.goal[1];
    }
    let mean = [sx / n as f64, sz / n as f64];
    assert!((mean[0] + 7.0).abs() < 0.02 && (mean[1] - 1.5).abs() < 0.02, "{mean:?}");
}

#[test]
fn density_sample_statistics() {
    let spec = Randomization::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d: Vec<f64> = (0..20_000).map(|_| sample_initial(&spec, &mut rng).density).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
    assert!((mean - 2000.0).abs() < 3.0, "mean {mean}");
    assert!((var.sqrt() - 85.0).abs() < 3.0, "std {}", var.sqrt());
}

#[test]
fn scale_action_examples() {
    let s = [0.3, 0.3, 0.2];
    assert_eq!(scale_action(&[1.0, -1.0, 0.5], &s), [0.3, -0.3, 0.1]);
    assert_eq!(scale_action(&[0.0, 0.0, 0.0], &s), [0.0, 0.0, 0.0]);
    assert_eq!(scale_action(&[2.0, 0.0, 0.0], &s), [0.3, 0.0, 0.0]);
    assert_eq!(scale_action(&[-7.0, f64::NAN, 0.0], &s), [-0.3, 0.0, 0.0]);
}

#[test]
fn normalization_examples() {
    let b = EnvConfig::default().observation;
    let n = b.normalize(&b.min);
    assert!(n.iter().all(|&v| v == -1.0));
    let mid: [f64; OBS_DIM] = std::array::from_fn(|i| 0.5 * (b.min[i] + b.max[i]));
    assert!(b.normalize(&mid).iter().all(|v| v.abs() < 1e-12));
    let over: [f64; OBS_DIM] = std::array::from_fn(|i| b.max[i] + 1e-6);
    assert!(b.normalize(&over).iter().all(|&v| v == 1.0));
}

proptest! {
    #[test]
    fn normalization_round_trip(u in proptest::array::uniform17(0.0..=1.0f64)) {
        let b = EnvConfig::default().observation;
        let x: [f64; OBS_DIM] = std::array::from_fn(|i| b.min[i] + u[i] * (b.max[i] - b.min[i]));
        let back = b.denormalize(&b.normalize(&x));
        for i in 0..OBS_DIM {
            prop_assert!((back[i] - x[i]).abs() <= 1e-12 * (1.0 + x[i].abs()));
        }
    }
}

#[test]
fn bad_bounds_are_rejected() {
    let mut cfg = EnvConfig::default();
    cfg.observation.min[4] = cfg.observation.max[4];
    assert!(matches!(Env::new(cfg, EnvAssets::default()), Err(EnvError::Config(_))));
    let text = DEFAULT_ENV_CFG.replace("horizon = 500", "horizon = 500\nbogus = 1");
    assert!(EnvConfig::parse(&text).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = EnvConfig::simplified();
    assert_eq!(EnvConfig::parse(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn horizon_step_terminates() {
    let mut cfg = EnvConfig::default();
    cfg.horizon = 40;
    let mut env = env_with(cfg);
    env.reset(Some(3)).unwrap();
    for t in 1..=40 {
        let r = env.step(&[0.0; 3]).unwrap();
        assert_eq!(r.terminated, t == 40, "step {t}");
        assert!(r.obs.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(r.reward.is_finite() && r.reward <= 5.0);
    }
    assert!(env.is_done());
    assert!(matches!(env.step(&[0.0; 3]), Err(EnvError::EpisodeOver)));
}

#[test]
fn full_horizon_is_five_hundred_steps() {
    let mut env = env_with(EnvConfig::default());
    env.reset(Some(8)).unwrap();
    let mut n = 0;
    loop {
        n += 1;
        let r = env.step(&[0.0; 3]).unwrap();
        if r.done() {
            assert!(r.terminated);
            break;
        }
    }
    assert_eq!(n, 500);
}

#[test]
fn lateral_escape_truncates() {
    let mut env = env_with(EnvConfig::default());
    env.reset(Some(11)).unwrap();
    env.world_mut().unwrap().rock_lateral_y = 1.5;
    let r = env.step(&[0.0; 3]).unwrap();
    assert!(r.truncated && !r.terminated);
    assert!(r.conditions.truncate);
    assert!(env.is_done());
    assert!(matches!(env.step(&[0.0; 3]), Err(EnvError::EpisodeOver)));
}

#[test]
fn far_end_escape_truncates() {
    let mut env = env_with(EnvConfig::default());
    env.reset(Some(12)).unwrap();
    env.world_mut().unwrap().rock_pose.x = -13.5;
    assert!(env.step(&[0.0; 3]).unwrap().truncated);
}

#[test]
fn rock_held_at_goal_earns_the_goal_bonus() {
    let mut env = env_with(EnvConfig::simplified());
    env.reset(Some(5)).unwrap();
    let goal = env.goal().unwrap();
    let w = env.world_mut().unwrap();
    // pin the rock at the goal, weightless for one step
    w.rock_pose.x = goal[0];
    w.rock_pose.z = goal[1];
    w.rock_vel = [0.0, 9.81 / 60.0, 0.0];
    let r = env.step(&[0.0; 3]).unwrap();
    assert!(r.conditions.goal);
    assert_eq!(r.terms.goal, 5.0);
    assert!(r.reward >= 5.0 + r.terms.guidance());
    assert!(r.reward <= 5.0);
}

#[test]
fn episode_lengths_never_exceed_the_horizon() {
    let mut env = env_with(EnvConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..1000u64 {
        env.reset(Some(seed)).unwrap();
        let mut n = 0;
        let mut a = [0.0; 3];
        loop {
            if n % 20 == 0 {
                a = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            }
            n += 1;
            if env.step(&a).unwrap().done() {
                break;
            }
        }
        assert!(n <= 500, "seed {seed}: {n} steps");
    }
}

#[test]
fn success_rule() {
    assert!(!episode_success(&[]));
    assert!(episode_success(&[false, false, true]));
    let mut held = vec![false; 440];
    held.extend([true; 30]);
    held.extend([false; 30]);
    assert!(episode_success(&held));
    let mut brief = vec![false; 470];
    brief.extend([true; 29]);
    brief.push(false);
    assert!(!episode_success(&brief));
}

#[test]
fn seed_streams_differ_per_environment() {
    let mut a = seed_stream(7, 0);
    let mut b = seed_stream(7, 1);
    let mut a2 = seed_stream(7, 0);
    let xa: Vec<u64> = (0..4).map(|_| Env::next_seed(&mut a)).collect();
    let xb: Vec<u64> = (0..4).map(|_| Env::next_seed(&mut b)).collect();
    let xa2: Vec<u64> = (0..4).map(|_| Env::next_seed(&mut a2)).collect();
    assert_eq!(xa, xa2);
    assert_ne!(xa, xb);
}

#[test]
fn reward_is_bounded_for_fuzzed_inputs() {
    let w = RewardWeights::default();
    let lb = reward_lower_bound(&w, [6.0, 7.0], 300.0, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let mut u = || rng.random_range(-1.0..1.0);
        let input = RewardInputs {
            rock: [-7.0 + 6.0 * u(), 1.5 + 7.0 * u()],
            goal: [-7.0, 1.5],
            action: [u(), u(), u()],
            forces: [300.0 * u(), 300.0 * u(), 300.0 * u()],
            prev_action: [u(), u(), u()],
            theta: 0.3 * u(),
            phi: 0.3 * u(),
        };
        let g = guidance_reward(&input, &w);
        assert!(g <= 0.0 && g >= lb);
        let total = total_reward(g, goal_reward(true, &w));
        assert!(total <= 5.0);
    }
}

#[test]
fn logs_round_trip_and_replay() {
    let mut env = env_with(EnvConfig::default());
    env.set_recording(Some(RecordKind::Agent));
    env.reset(Some(21)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..120 {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.2..1.2));
        if env.step(&a).unwrap().done() {
            break;
        }
    }
    let rec = env.take_record().unwrap();
    assert_eq!(rec.steps.len(), 120);
    let mut buf = Vec::new();
    rec.write_jsonl(&mut buf).unwrap();
    assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 121);
    let back = EpisodeRecord::read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, rec);
    assert_eq!(replay(&back).unwrap(), ReplayOutcome::Match { steps: 120 });

    let mut tampered = back.clone();
    tampered.steps[57].action[1] = -tampered.steps[57].action[1] + 0.25;
    match replay(&tampered).unwrap() {
        ReplayOutcome::Diverged { step, .. } => assert_eq!(step, 57),
        other => panic!("expected divergence, got {other:?}"),
    }

    let old = String::from_utf8(buf)
        .unwrap()
        .replacen("\"schema_version\":1", "\"schema_version\":0", 1);
    assert!(matches!(
        EpisodeRecord::read_jsonl(old.as_bytes()),
        Err(EnvError::RecordVersion { found: 0, .. })
    ));
}

#[test]
fn tampered_config_is_detected_on_replay() {
    let mut env = env_with(EnvConfig::default());
    env.set_recording(Some(RecordKind::Agent));
    env.reset(Some(2)).unwrap();
    env.step(&[0.5, 0.0, 0.0]).unwrap();
    let mut rec = env.take_record().unwrap();
    rec.header.env.reward.w1 = 14.0;
    assert!(matches!(replay(&rec), Err(EnvError::Record(_))));
}

#[test]
fn sand_scenario_uses_the_sand_table() {
    let mut cfg = EnvConfig::default();
    cfg.material = "sand".into();
    let env = env_with(cfg);
    assert_eq!(env.material().cohesion, 0.0);
    let mut cfg = EnvConfig::default();
    cfg.material = "clay".into();
    assert!(Env::new(cfg, EnvAssets::default()).is_err());
}
