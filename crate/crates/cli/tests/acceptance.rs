//! Acceptance suite. Prints one `PASS` or `FAIL` line per criterion.
//!
//! The fast criteria run one after another inside a single test so that the
//! runtime budgets are measured without other tests sharing the CPU. The two
//! training criteria are long runs and are opt-in:
//!
//! ```text
//! cargo test -p rockcap-cli --test acceptance -- --ignored --nocapture
//! ```

// `check!` negates comparisons so NaN fails too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rockcap_core::env::reward::{RewardInputs, RewardTerms};
use rockcap_core::env::*;
use rockcap_core::eval::smooth;
use rockcap_core::geom::{centroid, collide_convex, polar_moment, transform, Vec2};
use rockcap_core::nn::{Mlp, Tape};
use rockcap_core::physics::contact::{solve_velocities, Body, Contact};
use rockcap_core::physics::*;
use rockcap_core::ppo::{compute_gae, Boundary, PpoConfig, PpoError, Trainer, DEFAULT_PPO_CFG};
use rockcap_cli::run_from;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs one criterion, prints its line and reports whether it passed.
/// Output goes straight to the stdout handle so the test harness does not
/// swallow it.
fn criterion(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = f();
    let took = start.elapsed();
    if outcome.is_ok() && took > budget {
        outcome = Err(format!("took {took:.1?}, budget {budget:?}"));
    }
    let mut out = std::io::stdout().lock();
    // the harness leaves its own status line unterminated
    let line = match &outcome {
        Ok(detail) => format!("PASS  {name}: {detail} [{took:.2?}]"),
        Err(why) => format!("FAIL  {name}: {why} [{took:.2?}]"),
    };
    let _ = writeln!(out, "\n{line}");
    let _ = out.flush();
    outcome.is_ok()
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

// Weights written out as literals so the oracle shares nothing with the
// configuration code.
const W1: f64 = 13.0;
const W2: f64 = 8.0;
const W3: f64 = 3.0 * 200.0 * 200.0;
const W4: f64 = 12.0;
const W5: f64 = 1.0;
const GOAL_BONUS: f64 = 5.0;

fn oracle_guidance(i: &RewardInputs) -> f64 {
    let mut energy = 0.0;
    let mut smooth = 0.0;
    for j in 0..3 {
        energy += (i.action[j] * i.forces[j]) * (i.action[j] * i.forces[j]);
        smooth += (i.action[j] - i.prev_action[j]) * (i.action[j] - i.prev_action[j]);
    }
    let dx = i.rock[0] - i.goal[0];
    let dz = i.rock[1] - i.goal[1];
    -(dx * dx) / W1 - (dz * dz) / W2 - energy / W3 - smooth / W4 - (i.theta * i.theta + i.phi * i.phi) / W5
}

fn inputs(
    rock: [f64; 2],
    goal: [f64; 2],
    action: [f64; 3],
    forces: [f64; 3],
    prev_action: [f64; 3],
    theta: f64,
    phi: f64,
) -> RewardInputs {
    RewardInputs {
        rock,
        goal,
        action,
        forces,
        prev_action,
        theta,
        phi,
    }
}

fn reward_oracle() -> Outcome {
    let w = RewardWeights::default();
    let z = [0.0; 3];
    let g = [-7.0, 1.5];
    // (inputs, goal met, hand value of the guidance term when known)
    let cases: Vec<(RewardInputs, bool, Option<f64>)> = vec![
        (inputs(g, g, z, [250.0, -90.0, 40.0], z, 0.0, 0.0), false, Some(0.0)),
        (inputs([-8.0, 1.0], g, z, z, z, 0.0, 0.0), false, Some(-0.108_173_076_923_076_92)),
        (inputs(g, g, [1.0, 0.0, 0.0], [200.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.0, 0.0), false, Some(-1.0 / 3.0)),
        (inputs(g, g, z, z, z, 0.0, 0.0), true, Some(0.0)),
        (inputs([-7.1, 1.5], g, z, z, z, 0.0, 0.0), true, Some(-0.01 / 13.0)),
        (inputs([-7.0, 1.9], g, z, z, z, 0.0, 0.0), false, Some(-0.02)),
        (inputs(g, g, [1.0, 1.0, 1.0], z, [-1.0, -1.0, -1.0], 0.0, 0.0), false, Some(-1.0)),
        (inputs(g, g, z, z, z, 0.3, 0.4), false, Some(-0.25)),
        (inputs(g, g, [0.5, 0.0, 0.0], [400.0, 0.0, 0.0], [0.5, 0.0, 0.0], 0.0, 0.0), false, Some(-1.0 / 3.0)),
        (inputs([-10.0, 0.5], g, z, z, z, 0.0, 0.0), false, Some(-9.0 / 13.0 - 0.125)),
        (inputs(g, g, [0.0, -1.0, 0.0], z, [0.0, 1.0, 0.0], 0.0, 0.0), false, Some(-1.0 / 3.0)),
        (inputs(g, g, z, z, z, -0.1, 0.0), false, Some(-0.01)),
        (inputs([-13.0, 0.0], [-7.0, 1.5], [1.0, -1.0, 0.5], [300.0, -300.0, 100.0], [-1.0, 1.0, -0.5], 0.2, -0.2), false, None),
        (inputs([-9.3, 0.72], [-7.05, 1.61], [0.3, -0.2, 0.9], [120.0, 35.0, -60.0], [0.1, 0.0, 1.0], 0.02, -0.01), false, None),
        (inputs([-7.15, 1.45], [-7.05, 1.61], [0.0, 0.0, -0.4], [0.0, 12.0, -44.0], [0.0, 0.0, -0.4], 0.05, 0.05), true, None),
        (inputs([-6.9, 1.58], [-6.95, 1.52], [-0.7, 0.7, 0.0], [80.0, -80.0, 0.0], [-0.6, 0.8, 0.1], -0.03, 0.07), true, None),
        (inputs([-11.2, 0.4], [-7.2, 1.3], [1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [1.0, 1.0, 1.0], 0.0, 0.0), false, None),
        (inputs([-8.0, 2.5], [-7.0, 1.5], [-1.0, 0.0, 1.0], [-150.0, 0.0, 150.0], [1.0, 0.0, -1.0], 0.09, -0.09), false, None),
        (inputs([-12.9, -0.5], [-6.8, 1.7], z, [1e3, 1e3, 1e3], z, 0.5, 0.5), false, None),
        (inputs([-7.0, 1.5], [-7.0, 1.5], [0.25, 0.25, 0.25], [10.0, 20.0, 30.0], [0.0; 3], 0.0, 0.0), true, None),
        (inputs([-9.0, 0.48], [-7.0, 1.5], [-0.3, 0.0, 0.0], [5.0, 0.0, 0.0], [-0.3, 0.0, 0.0], 0.0, 0.0), false, None),
        (inputs([-7.0, 1.5], [-7.0, 1.5], z, z, z, 1e-3, -1e-3), true, Some(-2e-6)),
    ];
    check!(cases.len() >= 20, "only {} cases", cases.len());
    for (k, (i, met, hand)) in cases.iter().enumerate() {
        let oracle = oracle_guidance(i);
        if let Some(h) = hand {
            check!((oracle - h).abs() <= 1e-12, "case {k}: oracle {oracle} disagrees with hand value {h}");
        }
        let got = guidance_reward(i, &w);
        check!((got - oracle).abs() <= 1e-12, "case {k}: guidance {got}, expected {oracle}");
        let bonus = if *met { GOAL_BONUS } else { 0.0 };
        check!(goal_reward(*met, &w) == bonus, "case {k}: goal reward");
        let total = total_reward(got, goal_reward(*met, &w));
        check!((total - (oracle + bonus)).abs() <= 1e-12, "case {k}: total {total}");
        let terms = RewardTerms::compute(i, *met, &w);
        check!((terms.total() - total).abs() <= 1e-12, "case {k}: term breakdown {}", terms.total());
    }
    check!((total_reward(-0.108173, 5.0) - 4.891827).abs() <= 1e-12, "sum example");
    check!(total_reward(-0.1, 0.0) == -0.1 && total_reward(0.0, 5.0) == 5.0, "sum examples");
    Ok(format!("{} cases within 1e-12", cases.len()))
}

fn conditions() -> Outcome {
    let w = RewardWeights::default();
    check!(w.delta_prox == 0.2 && w.delta_tilt == 0.1, "thresholds {} {}", w.delta_prox, w.delta_tilt);
    check!(w.x_truncate == -13.0 && w.y_truncate == 1.0, "truncation limits");
    let mut n = 0;
    for p in [false, true] {
        for t in [false, true] {
            check!(c_goal(p, t) == (p && t), "c_goal({p}, {t})");
            n += 1;
        }
    }
    let prox = [
        ([0.0, 0.0], true),
        ([0.25, 0.0], false),
        ([0.2, 0.0], false),
        ([-0.2, 0.0], false),
        ([0.0, 0.2], false),
        ([0.0, -0.2], false),
        ([0.199_999_999, -0.199_999_999], true),
        ([0.200_000_001, 0.0], false),
    ];
    for (d, want) in prox {
        check!(c_proximity(d, [0.0, 0.0], 0.2) == want, "c_proximity offset {d:?}");
        n += 1;
    }
    let tilt = [
        (0.0, 0.0, true),
        (0.1, 0.0, false),
        (-0.1, 0.0, false),
        (0.0, 0.1, false),
        (0.0, -0.1, false),
        (0.05, -0.09, true),
        (0.099_999_999, 0.099_999_999, true),
    ];
    for (th, ph, want) in tilt {
        check!(c_tilting(th, ph, 0.1) == want, "c_tilting({th}, {ph})");
        n += 1;
    }
    let trunc = [
        (-9.0, 0.0, false),
        (-9.0, 1.2, true),
        (-9.0, -1.2, true),
        (-9.0, 1.0, false),
        (-9.0, -1.0, false),
        (-9.0, 1.000_000_001, true),
        (-13.5, 0.0, true),
        (-13.0, 0.0, false),
        (-13.000_000_001, 0.0, true),
    ];
    for (x, y, want) in trunc {
        check!(c_truncate(x, y, &w) == want, "c_truncate({x}, {y})");
        n += 1;
    }
    Ok(format!("{n} boolean and boundary cases"))
}

// Direct double sum, independent of the backward recursion.
fn brute_force_gae(r: &[f64], v: &[f64], b: &[Boundary], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next = |t: usize| match b[t] {
        Boundary::Continue if t + 1 < n => v[t + 1],
        Boundary::Continue => last,
        Boundary::Terminal => 0.0,
        Boundary::Truncated(x) => x,
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in t..n {
                sum += (gamma * lambda).powi((k - t) as i32) * (r[k] + gamma * next(k) - v[k]);
                if b[k] != Boundary::Continue {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn gae() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AE);
    for case in 0..200 {
        let n = rng.random_range(1..=50);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let b: Vec<Boundary> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => Boundary::Terminal,
                1 => Boundary::Truncated(rng.random_range(-10.0..10.0)),
                _ => Boundary::Continue,
            })
            .collect();
        let last = rng.random_range(-10.0..10.0);
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = compute_gae(&r, &v, &b, last, gamma, lambda).map_err(|e| e.to_string())?;
        let want = brute_force_gae(&r, &v, &b, last, gamma, lambda);
        for t in 0..n {
            check!((adv[t] - want[t]).abs() <= 1e-10, "sequence {case} step {t}: {} vs {}", adv[t], want[t]);
            check!(ret[t] == adv[t] + v[t], "sequence {case} step {t}: return is not advantage plus value");
        }
        // λ = 0 is the one-step TD error, exactly
        let (td, _) = compute_gae(&r, &v, &b, last, gamma, 0.0).map_err(|e| e.to_string())?;
        for t in 0..n {
            let next = match b[t] {
                Boundary::Continue if t + 1 < n => v[t + 1],
                Boundary::Continue => last,
                Boundary::Terminal => 0.0,
                Boundary::Truncated(x) => x,
            };
            check!(td[t] == r[t] + gamma * next - v[t], "λ=0 sequence {case} step {t}");
        }
    }
    let (adv, _) = compute_gae(&[0.3], &[1.0], &[Boundary::Continue], 2.0, 0.9, 0.95).map_err(|e| e.to_string())?;
    check!(adv[0] == 0.3 + 0.9 * 2.0 - 1.0, "single step {}", adv[0]);
    let (adv, _) = compute_gae(&[0.3], &[1.0], &[Boundary::Terminal], 2.0, 0.9, 0.95).map_err(|e| e.to_string())?;
    check!(adv[0] == 0.3 - 1.0, "single terminal step {}", adv[0]);
    Ok("200 random sequences within 1e-10; λ=0 and single-step exact".into())
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9AD);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for net_id in 0..100 {
        let layers = 1 + net_id % 3;
        let sizes: Vec<usize> = (0..=layers).map(|_| rng.random_range(1..7)).collect();
        let mut net = Mlp::zeros(&sizes);
        for p in net.params_mut() {
            *p = rng.random_range(-1.5..1.5);
        }
        let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut tape = Tape::default();
        net.forward_tape(&x, &mut tape).map_err(|e| e.to_string())?;
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, &u, &mut g).map_err(|e| e.to_string())?;
        for k in 0..net.num_params() {
            let p0 = net.params()[k];
            net.params_mut()[k] = p0 + h;
            let fp = dot(&net.forward(&x).map_err(|e| e.to_string())?, &u);
            net.params_mut()[k] = p0 - h;
            let fm = dot(&net.forward(&x).map_err(|e| e.to_string())?, &u);
            net.params_mut()[k] = p0;
            let num = (fp - fm) / (2.0 * h);
            let rel = (g[k] - num).abs() / g[k].abs().max(num.abs()).max(1e-6);
            worst = worst.max(rel);
            check!(rel < 1e-4, "net {net_id} param {k}: analytic {} numeric {num}", g[k]);
        }
    }
    Ok(format!("100 nets, worst relative error {worst:.2e}"))
}

const DT: f64 = 1.0 / 60.0;

/// (rock-x lower bound, upper bound, extensions) of the nine starting rows.
const INITIAL_ROWS: [(f64, f64, [f64; 3]); 9] = [
    (-8.0, -8.0, [0.13, 0.24, -0.88]),
    (-8.5, -8.0, [0.08, 0.11, -0.80]),
    (-9.0, -8.5, [0.06, -0.03, -0.74]),
    (-9.5, -9.0, [0.03, -0.15, -0.74]),
    (-10.0, -9.5, [-0.01, -0.33, -0.70]),
    (-10.5, -10.0, [-0.03, -0.39, -0.70]),
    (-11.0, -10.5, [-0.10, -0.57, -0.70]),
    (-11.5, -11.0, [-0.10, -0.70, -0.70]),
    (-11.5, -11.5, [-0.16, -0.80, -0.78]),
];

fn scene_with(material: SoilMaterial, family: RockFamily) -> Result<Scene, String> {
    let file = GeometryFile::default_fixture();
    Scene::new(
        ExcavatorGeometry::from_file(&file).map_err(|e| e.to_string())?,
        file.physics.clone(),
        material,
        RockShape::new(family, 2000.0).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())
}

fn world_at(scene: &Scene, ext: [f64; 3], rock_x: f64) -> Result<WorldState, String> {
    let terrain = GeometryFile::default_fixture().terrain.build();
    let pose = rock_on_terrain_spawn(&scene.rock, rock_x, &terrain).map_err(|e| e.to_string())?;
    WorldState::new(scene, ext, pose, terrain).map_err(|e| e.to_string())
}

fn physics_invariants() -> Outcome {
    let tol = GeometryFile::default_fixture().physics.penetration_tolerance;
    check!(tol <= 0.01, "penetration tolerance {tol}");

    // penetration under an aggressive dig followed by random commands
    let mut worst_pen: f64 = 0.0;
    for (i, family) in RockFamily::ALL.iter().enumerate() {
        for material in [SoilMaterial::dirt(), SoilMaterial::sand()] {
            let s = scene_with(material, *family)?;
            for seed in 0..3u64 {
                let x = -8.2 - 1.0 * seed as f64 - 0.1 * i as f64;
                let row = INITIAL_ROWS.iter().find(|(lo, hi, _)| x >= *lo && x < *hi).map_or(INITIAL_ROWS[8].2, |r| r.2);
                let mut w = world_at(&s, row, x)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut cmd = [0.0; 3];
                for k in 0..500 {
                    if k < 120 {
                        cmd = [-0.3, 0.0, 0.0];
                    } else if rng.random_bool(0.05) {
                        cmd = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2)];
                    }
                    step(&mut w, &s, cmd, DT, &mut rng);
                    worst_pen = worst_pen.max(penetration(&w, &s).max());
                }
            }
        }
    }
    check!(worst_pen <= 0.01, "penetration {worst_pen} m");

    // dissipation with friction and cohesion removed
    let mut s = scene_with(SoilMaterial::sand(), RockFamily::II)?;
    s.params.friction_rock_bucket = 0.0;
    s.params.friction_rock_terrain = 0.0;
    let ext = [0.06, -0.03, -0.74];
    let cavity = s.geometry.forward_kinematics(ext).map_err(|e| e.to_string())?.cavity_center;
    for drop_at in [Vec2::new(-9.5, 1.8), cavity + Vec2::new(0.0, 1.2)] {
        let mut w = world_at(&s, ext, -9.0)?;
        w.rock_pose.x = drop_at.x;
        w.rock_pose.z = drop_at.y;
        w.rock_pose.angle = 0.3;
        let e0 = w.rock_energy(&s);
        let mut prev = e0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..240 {
            step(&mut w, &s, [0.0; 3], DT, &mut rng);
            let e = w.rock_energy(&s);
            check!(e <= prev + 1e-6 * e0.abs(), "energy rose at step {k}: {prev} -> {e}");
            prev = e;
        }
    }

    // frictionless two-body collision
    let s = scene_with(SoilMaterial::dirt(), RockFamily::I)?;
    let g = &s.geometry;
    let local_center = centroid(&g.bucket_polygon);
    let inertia = 7850.0 * g.bucket_width * polar_moment(&g.bucket_polygon);
    let pieces: Vec<Vec<Vec2>> =
        g.bucket_pieces.iter().map(|p| p.iter().map(|v| v - local_center).collect()).collect();
    let mut bodies = [
        Body::dynamic(Vec2::new(0.0, 0.0), Vec2::new(1.5, 0.2), 0.3, g.link_masses[2], inertia),
        Body::dynamic(Vec2::new(1.6, 0.1), Vec2::new(-0.5, 0.0), -0.4, s.rock.mass(), s.rock.inertia()),
    ];
    let mut angles = [-1.2, 0.0];
    let momentum = |b: &[Body; 2]| b[0].momentum().unwrap() + b[1].momentum().unwrap();
    let p0 = momentum(&bodies);
    let mut collided = false;
    for _ in 0..120 {
        let rock_poly = transform(&s.rock.vertices, &bodies[1].position, angles[1]);
        let mut contacts = Vec::new();
        for piece in &pieces {
            let world = transform(piece, &bodies[0].position, angles[0]);
            for cp in collide_convex(&world, &rock_poly, 0.05) {
                contacts.push(Contact::new(0, 1, cp.point, cp.normal, cp.separation, 0.0));
            }
        }
        solve_velocities(&mut bodies, &mut contacts, DT, 60);
        collided |= contacts.iter().any(|c| c.normal_impulse > 0.0);
        for (b, a) in bodies.iter_mut().zip(angles.iter_mut()) {
            b.position += b.velocity * DT;
            *a += b.angular_velocity * DT;
        }
    }
    check!(collided, "bodies never touched");
    let drift = (momentum(&bodies) - p0).norm() / p0.norm();
    check!(drift <= 1e-6, "momentum drift {drift:e}");

    // soil resistance grows with depth, cohesion and friction angle
    let flat = TerrainField::flat(-16.0, 1.0, 0.05, 0.0);
    let plate = |d: f64| {
        vec![Vec2::new(-9.0, -d), Vec2::new(-8.6, -d), Vec2::new(-8.6, 1.5 - d), Vec2::new(-9.0, 1.5 - d)]
    };
    let force = |d: f64, m: &SoilMaterial| soil_reaction(&plate(d), Vec2::new(0.3, 0.0), &flat, m, 1.9, 9.81, DT).force.norm();
    let mut grid = 0;
    for base in [SoilMaterial::dirt(), SoilMaterial::sand()] {
        for ci in 0..4 {
            for pi in 0..4 {
                let mut m = base.clone();
                m.cohesion = base.cohesion + 1000.0 * ci as f64;
                m.internal_friction_angle = base.internal_friction_angle + 0.1 * pi as f64;
                let mut last = 0.0;
                for k in 0..=30 {
                    let d = 0.05 * k as f64;
                    let f = force(d, &m);
                    check!(f >= last, "depth {d}: {f} < {last}");
                    if ci > 0 {
                        let mut weaker = m.clone();
                        weaker.cohesion -= 1000.0;
                        check!(f >= force(d, &weaker), "cohesion at depth {d}");
                    }
                    if pi > 0 {
                        let mut weaker = m.clone();
                        weaker.internal_friction_angle -= 0.1;
                        check!(f >= force(d, &weaker), "friction angle at depth {d}");
                    }
                    last = f;
                    grid += 1;
                }
            }
        }
    }

    // every starting row is reachable and puts the bucket behind and above the rock
    let s = scene_with(SoilMaterial::dirt(), RockFamily::I)?;
    let top = RockFamily::ALL
        .iter()
        .map(|f| RockShape::new(*f, 2000.0).map(|r| r.clearance_radius()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
        * 2.0
        + rock::SPAWN_ELEVATION;
    for (k, (lo, hi, ext)) in INITIAL_ROWS.into_iter().enumerate() {
        // the first and last rows are open-ended
        let probe = match k {
            0 => -7.5,
            8 => -12.0,
            _ => 0.5 * (lo + hi),
        };
        check!(initial_extensions(probe) == ext, "row lookup at {probe}");
        for (i, a) in s.geometry.actuators.iter().enumerate() {
            check!(a.contains(ext[i]), "row {lo}..{hi}: extension {} out of range", ext[i]);
        }
        let c = s.geometry.forward_kinematics(ext).map_err(|e| e.to_string())?.bucket_center;
        let mid = 0.5 * (lo + hi);
        check!(c.x > mid && c.y > top, "row {lo}..{hi}: bucket at ({}, {})", c.x, c.y);
    }
    Ok(format!("penetration {worst_pen:.4} m, momentum drift {drift:.1e}, {grid} soil grid points, 9 start rows"))
}

fn rollout_log(seed: u64) -> Result<EpisodeRecord, String> {
    let mut env = Env::new(EnvConfig::default(), EnvAssets::default()).map_err(|e| e.to_string())?;
    env.set_recording(Some(RecordKind::Agent));
    env.reset(Some(seed)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xACC);
    let mut steps = 0;
    while !env.is_done() {
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        env.step(&a).map_err(|e| e.to_string())?;
        steps += 1;
    }
    check!(steps == 500, "episode ended after {steps} steps");
    env.take_record().ok_or_else(|| "no record".to_string())
}

fn jsonl(rec: &EpisodeRecord) -> Result<Vec<u8>, String> {
    let mut v = Vec::new();
    rec.write_jsonl(&mut v).map_err(|e| e.to_string())?;
    Ok(v)
}

fn training_fingerprint() -> Result<(Vec<u8>, Vec<String>), String> {
    let mut cfg = PpoConfig::parse(DEFAULT_PPO_CFG).map_err(|e| e.to_string())?;
    cfg.n_steps_per_env = 256;
    let factory = |_| -> Result<Env, PpoError> { Ok(Env::new(EnvConfig::default(), EnvAssets::default())?) };
    let mut t = Trainer::new(cfg, 11, factory).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for _ in 0..2 {
        let r = t.iterate().map_err(|e| e.to_string())?;
        // wall time is the only field allowed to differ
        rows.push(format!("{:?} {:?}", r.stats, (r.total_steps, r.episodes, r.mean_cumreward_100)));
    }
    let mut bytes = Vec::new();
    t.checkpoint().write_to(&mut bytes).map_err(|e| e.to_string())?;
    Ok((bytes, rows))
}

fn determinism(dir: &Path) -> Outcome {
    let a = jsonl(&rollout_log(2024)?)?;
    let b = jsonl(&rollout_log(2024)?)?;
    check!(a == b, "two 500-step rollouts with one seed differ");

    let (ck_a, rows_a) = training_fingerprint()?;
    let (ck_b, rows_b) = training_fingerprint()?;
    check!(rows_a == rows_b, "training statistics differ between runs");
    check!(ck_a == ck_b, "trained parameters differ between runs");

    let good = dir.join("episode.jsonl");
    std::fs::write(&good, &a).map_err(|e| e.to_string())?;
    let code = run_from(["rockcap", "replay", good.to_str().unwrap()]);
    check!(code == 0, "replay of a fresh log exited with {code}");

    let mut rec = EpisodeRecord::read_jsonl(&a[..]).map_err(|e| e.to_string())?;
    rec.steps[250].reward += 1e-9;
    let bad = dir.join("tampered.jsonl");
    std::fs::write(&bad, jsonl(&rec)?).map_err(|e| e.to_string())?;
    let code = run_from(["rockcap", "replay", bad.to_str().unwrap()]);
    check!(code == 1, "replay of a tampered log exited with {code}");
    Ok("rollout, 2-iteration training and replay all bitwise".into())
}

fn scenario_harness(dir: &Path) -> Outcome {
    let train = dir.join("train");
    let eval = dir.join("eval");
    let code = run_from(["rockcap", "train", "--steps", "8192", "--seed", "3", "--out", train.to_str().unwrap()]);
    check!(code == 0, "train exited with {code}");
    let ck = train.join("final.bin");
    let code = run_from([
        "rockcap",
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--scenario",
        "all",
        "--seed",
        "5",
        "--out",
        eval.to_str().unwrap(),
    ]);
    check!(code == 0, "eval exited with {code}");
    let report = std::fs::read_to_string(eval.join("report.txt")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = report.lines().collect();
    check!(lines[0].contains("Success rate") && lines[0].contains("Cumulative reward"), "header {:?}", lines[0]);
    for name in ["training_condition", "unseen_rocks", "unseen_material"] {
        let row = lines.iter().find(|l| l.starts_with(name)).ok_or(format!("no {name} row"))?;
        check!(row.contains('±'), "{name} row has no mean±std: {row}");
        let dir = eval.join("records").join(name);
        let mut logs: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.flatten().map(|e| e.path()).collect();
        logs.sort();
        check!(logs.len() == 10, "{name}: {} episodes", logs.len());
        for p in logs {
            let f = std::fs::File::open(&p).map_err(|e| e.to_string())?;
            let h = EpisodeRecord::read_jsonl(std::io::BufReader::new(f)).map_err(|e| e.to_string())?.header;
            let fam_ok = match name {
                "unseen_rocks" => matches!(h.rock_family, RockFamily::III | RockFamily::IV),
                _ => matches!(h.rock_family, RockFamily::I | RockFamily::II),
            };
            let material = if name == "unseen_material" { "sand" } else { "dirt" };
            check!(fam_ok, "{name}: family {}", h.rock_family);
            check!(h.env.material == material, "{name}: material {}", h.env.material);
        }
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval.join("metrics.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check!(metrics["metrics"].as_array().map_or(0, |m| m.len()) == 3, "metrics.json rows");
    Ok("3 scenarios x 10 episodes with swapped rocks and sand".into())
}

#[test]
fn primary_acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let results = [
        criterion("reward oracle suite", secs(1), reward_oracle),
        criterion("condition suite", secs(1), conditions),
        criterion("GAE brute-force equivalence", secs(5), gae),
        criterion("gradient checks", secs(30), gradient_checks),
        criterion("physics invariants", secs(60), physics_invariants),
        criterion("determinism and replay", secs(60), || determinism(dir.path())),
        criterion("scenario harness", secs(600), || scenario_harness(dir.path())),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

/// Success rate over the trailing window at any point, and the smoothed
/// reward curve at the end against its value at `early_step`.
fn training_outcome(
    env_cfg: EnvConfig,
    total_steps: u64,
    success_bar: f64,
    early_step: impl FnOnce(u64) -> u64,
    seed: u64,
) -> Outcome {
    let mut cfg = PpoConfig::parse(DEFAULT_PPO_CFG).map_err(|e| e.to_string())?;
    cfg.total_timesteps = total_steps;
    let factory = |_| -> Result<Env, PpoError> { Ok(Env::new(env_cfg.clone(), EnvAssets::default())?) };
    let mut t = Trainer::new(cfg, seed, factory).map_err(|e| e.to_string())?;
    while t.total_steps() < total_steps {
        t.iterate().map_err(|e| e.to_string())?;
    }
    let rows: Vec<_> = t.curve().iter().filter(|r| r.mean_cumreward_100.is_some()).collect();
    check!(!rows.is_empty(), "no finished episodes");
    let rewards: Vec<f64> = rows.iter().map(|r| r.mean_cumreward_100.unwrap()).collect();
    let smoothed = smooth(&rewards, 0.9).map_err(|e| e.to_string())?;
    let early = early_step(total_steps);
    let k = rows.iter().position(|r| r.total_steps >= early).ok_or("curve too short")?;
    let (first, last) = (smoothed[k], *smoothed.last().unwrap());
    let best = rows.iter().filter_map(|r| r.success_rate_100).fold(0.0, f64::max);
    let detail = format!(
        "best success_rate_100 {best:.2} (bar {success_bar}), smoothed reward {first:.1} at step {} -> {last:.1} at {}",
        rows[k].total_steps,
        t.total_steps()
    );
    check!(best >= success_bar, "{detail}");
    check!(last > first, "{detail}");
    Ok(detail)
}

#[test]
#[ignore = "2x10^5-step training run; opt in with --ignored"]
fn training_smoke() {
    let ok = criterion("training smoke (simplified task)", secs(45 * 60), || {
        training_outcome(EnvConfig::simplified(), 200_000, 0.5, |_| 20_000, 0)
    });
    assert!(ok);
}

#[test]
#[ignore = "extended 2x10^6-step run; opt in with --ignored"]
fn full_randomization_training() {
    let ok = criterion("full-randomization training", secs(8 * 3600), || {
        let cfg = EnvConfig::parse(DEFAULT_ENV_CFG).map_err(|e| e.to_string())?;
        training_outcome(cfg, 2_000_000, 0.4, |n| n / 4, 0)
    });
    assert!(ok);
}
