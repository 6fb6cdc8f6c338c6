//! World state and the fixed-rate step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::contact::{solve_velocities, Body, Contact};
use super::geometry::{ExcavatorGeometry, PhysicsParams, Pose};
use super::rock::{RockPose, RockShape};
use super::soil::{soil_reaction, SoilMaterial};
use super::terrain::TerrainField;
use super::PhysicsError;
use crate::geom::{collide_convex, cross, lower_envelope, minimum_translation, transform, Vec2};

/// Soil fraction per second that pours out of a bucket held mouth-down.
const SPILL_RATE: f64 = 4.0;
/// Relaxation passes applied to the terrain per step.
const RELAX_PASSES: usize = 2;
/// Narrowest footing used for the bearing-capacity cap (m).
const MIN_FOOTING: f64 = 0.3;

/// Static parts of a world: linkage, constants, soil and the rock shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub geometry: ExcavatorGeometry,
    pub params: PhysicsParams,
    pub material: SoilMaterial,
    pub rock: RockShape,
}

impl Scene {
    pub fn new(
        geometry: ExcavatorGeometry,
        params: PhysicsParams,
        material: SoilMaterial,
        rock: RockShape,
    ) -> Result<Self, PhysicsError> {
        geometry.validate()?;
        material.validate()?;
        rock.validate()?;
        Ok(Self {
            geometry,
            params,
            material,
            rock,
        })
    }

    pub fn rock_polygon(&self, pose: &RockPose) -> Vec<Vec2> {
        transform(&self.rock.vertices, &pose.position(), pose.angle)
    }

    /// Soil mass the bucket cavity holds before overflowing (kg).
    pub fn bucket_capacity(&self) -> f64 {
        let g = &self.geometry;
        let r = g.cavity_radius;
        let s = r - g.cavity_center.y;
        let segment = r * r * ((r - s) / r).acos() - (r - s) * (2.0 * r * s - s * s).sqrt();
        segment * g.bucket_width * self.material.density
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    /// Boom, arm and bucket actuator extensions (m).
    pub actuator_ext: [f64; 3],
    /// Actuator extension rates (m/s).
    pub actuator_vel: [f64; 3],
    pub rock_pose: RockPose,
    /// (vx, vz, ω) in m/s and rad/s.
    pub rock_vel: [f64; 3],
    /// Out-of-plane rock offset (m).
    pub rock_lateral_y: f64,
    pub terrain: TerrainField,
    pub bucket_soil_mass: f64,
    /// Cabin pitch, positive nose-down (rad).
    pub cabin_pitch: f64,
    pub cabin_roll: f64,
    /// Actuator forces (kN).
    pub joint_forces: [f64; 3],
    pub sim_time: f64,
}

impl WorldState {
    /// A world at rest with the given extensions and rock pose.
    pub fn new(
        scene: &Scene,
        actuator_ext: [f64; 3],
        rock_pose: RockPose,
        terrain: TerrainField,
    ) -> Result<Self, PhysicsError> {
        let pose = scene.geometry.forward_kinematics(actuator_ext)?;
        let joint_forces = joint_forces(&scene.geometry, &pose, &[], scene.params.gravity);
        Ok(Self {
            actuator_ext,
            actuator_vel: [0.0; 3],
            rock_pose,
            rock_vel: [0.0; 3],
            rock_lateral_y: 0.0,
            terrain,
            bucket_soil_mass: 0.0,
            cabin_pitch: 0.0,
            cabin_roll: 0.0,
            joint_forces,
            sim_time: 0.0,
        })
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.rock_pose.x,
            self.rock_pose.z,
            self.rock_pose.angle,
            self.rock_lateral_y,
            self.bucket_soil_mass,
            self.cabin_pitch,
            self.cabin_roll,
            self.sim_time,
        ];
        scalars
            .iter()
            .chain(&self.actuator_ext)
            .chain(&self.actuator_vel)
            .chain(&self.rock_vel)
            .chain(&self.joint_forces)
            .chain(&self.terrain.heights)
            .all(|v| v.is_finite())
    }

    pub fn pose(&self, geometry: &ExcavatorGeometry) -> Pose {
        geometry.pose_unchecked(self.actuator_ext)
    }

    /// Kinetic plus potential energy of the rock (J).
    pub fn rock_energy(&self, scene: &Scene) -> f64 {
        let m = scene.rock.mass();
        let v2 = self.rock_vel[0].powi(2) + self.rock_vel[1].powi(2);
        0.5 * m * v2
            + 0.5 * scene.rock.inertia() * self.rock_vel[2].powi(2)
            + m * scene.params.gravity * self.rock_pose.z
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub bucket_contacts: usize,
    pub terrain_contacts: usize,
    /// Total normal impulse from the bucket on the rock (N·s).
    pub bucket_normal_impulse: f64,
    pub terrain_normal_impulse: f64,
    /// Total tangential impulse magnitude from the bucket on the rock (N·s).
    pub bucket_tangent_impulse: f64,
    pub soil_force: Vec2,
    pub removed_volume: f64,
    pub spilled_mass: f64,
    /// Soil area pushed aside by the rock sinking (m² per unit width).
    pub displaced_area: f64,
}

impl StepReport {
    /// Rock carried by the bucket with no ground support.
    pub fn bucket_supported(&self) -> bool {
        self.bucket_normal_impulse > 0.0 && self.terrain_normal_impulse == 0.0
    }
}

/// Largest rock penetration into the terrain and into the bucket shell (m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Penetration {
    pub terrain: f64,
    pub bucket: f64,
}

impl Penetration {
    pub fn max(&self) -> f64 {
        self.terrain.max(self.bucket)
    }
}

pub fn penetration(state: &WorldState, scene: &Scene) -> Penetration {
    let rock = scene.rock_polygon(&state.rock_pose);
    let pose = state.pose(&scene.geometry);
    let bucket = pose
        .bucket_pieces
        .iter()
        .filter_map(|piece| minimum_translation(piece, &rock))
        .map(|(_, d)| d)
        .fold(0.0, f64::max);
    Penetration {
        terrain: terrain_penetration(&state.terrain, &rock),
        bucket,
    }
}

fn rock_extent(poly: &[Vec2]) -> (f64, f64) {
    poly.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.x), b.max(p.x)))
}

fn terrain_penetration(terrain: &TerrainField, rock: &[Vec2]) -> f64 {
    let by_vertex = rock
        .iter()
        .map(|v| terrain.height_at(v.x) - v.y)
        .fold(0.0, f64::max);
    let (x0, x1) = rock_extent(rock);
    let by_node = terrain
        .nodes_between(x0, x1)
        .filter_map(|i| lower_envelope(rock, terrain.node_x(i)).map(|z| terrain.heights[i] - z))
        .fold(0.0, f64::max);
    by_vertex.max(by_node)
}

/// Lowers the terrain wherever it reaches into the rock and returns the
/// removed area.
fn carve_under(terrain: &mut TerrainField, rock: &[Vec2]) -> f64 {
    let before = terrain.area_above(0.0);
    let (x0, x1) = rock_extent(rock);
    for i in terrain.nodes_between(x0, x1) {
        if let Some(z) = lower_envelope(rock, terrain.node_x(i)) {
            if terrain.heights[i] > z {
                terrain.heights[i] = z;
            }
        }
    }
    let last = terrain.heights.len() - 1;
    for v in rock {
        let pen = terrain.height_at(v.x) - v.y;
        if pen > 0.0 {
            let s = ((v.x - terrain.x_origin) / terrain.cell_size).max(0.0);
            let i = (s.floor() as usize).min(last - 1);
            terrain.heights[i] -= pen;
            terrain.heights[i + 1] -= pen;
        }
    }
    before - terrain.area_above(0.0)
}

/// Actuator forces (kN) balancing link self-weight plus `bucket_loads`,
/// given as (application point, force on the bucket) pairs.
pub fn joint_forces(
    geometry: &ExcavatorGeometry,
    pose: &Pose,
    bucket_loads: &[(Vec2, Vec2)],
    gravity: f64,
) -> [f64; 3] {
    let weight = |m: f64| Vec2::new(0.0, -m * gravity);
    let boom_mid = (geometry.base_anchor + pose.boom_tip) * 0.5;
    let arm_mid = (pose.boom_tip + pose.bucket_pivot) * 0.5;
    let pivots = pose.pivots(geometry);
    let masses = geometry.link_masses;
    std::array::from_fn(|i| {
        let piv = pivots[i];
        let mut torque = cross(&(pose.bucket_center - piv), &weight(masses[2]));
        if i <= 1 {
            torque += cross(&(arm_mid - piv), &weight(masses[1]));
        }
        if i == 0 {
            torque += cross(&(boom_mid - piv), &weight(masses[0]));
        }
        for (r, f) in bucket_loads {
            torque += cross(&(r - piv), f);
        }
        geometry.actuators[i].slope * torque / 1000.0
    })
}

/// Quasi-static cabin pitch from the loads the bucket transmits to the
/// machine. Positive moments tip the machine forward about the front track
/// edge, negative ones backward about the rear edge.
pub fn cabin_pitch(geometry: &ExcavatorGeometry, params: &PhysicsParams, loads: &[(Vec2, Vec2)]) -> f64 {
    let front = Vec2::new(-geometry.track_half_length, 0.0);
    let rear = Vec2::new(geometry.track_half_length, 0.0);
    let moment = |edge: Vec2| loads.iter().map(|(r, f)| cross(&(r - edge), f)).sum::<f64>();
    let restoring = geometry.machine_mass * params.gravity * geometry.track_half_length;
    let stiffness = params.tilt_compliance_fraction * restoring / 0.1;
    let m_front = moment(front);
    let m_rear = moment(rear);
    let m = if m_front > 0.0 {
        m_front
    } else if m_rear < 0.0 {
        m_rear
    } else {
        0.0
    };
    (m / stiffness).clamp(-params.tilt_limit, params.tilt_limit)
}

const ROCK: usize = 0;
const BUCKET: usize = 1;
const GROUND: usize = 2;

/// Advances `state` by `dt` with actuator speed commands `commanded` (m/s).
///
/// Panics on non-finite input; the world never produces NaN from finite
/// input.
pub fn step<R: Rng + ?Sized>(
    state: &mut WorldState,
    scene: &Scene,
    commanded: [f64; 3],
    dt: f64,
    rng: &mut R,
) -> StepReport {
    assert!(dt > 0.0 && dt.is_finite(), "invalid time step {dt}");
    assert!(commanded.iter().all(|c| c.is_finite()), "non-finite command {commanded:?}");
    assert!(state.is_finite(), "non-finite world state");

    let g = &scene.geometry;
    let p = &scene.params;
    let grav = p.gravity;
    let mut report = StepReport::default();

    // actuators
    let pose0 = g.pose_unchecked(state.actuator_ext);
    let alpha = 1.0 - (-dt / g.actuator_time_constant).exp();
    for i in 0..3 {
        let a = &g.actuators[i];
        let mut v = state.actuator_vel[i] + (commanded[i] - state.actuator_vel[i]) * alpha;
        let mut q = state.actuator_ext[i] + v * dt;
        if q <= a.min {
            q = a.min;
            v = v.max(0.0);
        } else if q >= a.max {
            q = a.max;
            v = v.min(0.0);
        }
        state.actuator_ext[i] = q;
        state.actuator_vel[i] = v;
    }
    let pose1 = g.pose_unchecked(state.actuator_ext);
    let pivot_vel = (pose1.bucket_pivot - pose0.bucket_pivot) / dt;
    let bucket_omega = (pose1.bucket_angle - pose0.bucket_angle) / dt;
    let bucket = Body::kinematic(pose0.bucket_pivot, pivot_vel, bucket_omega);

    // bucket through the soil
    let tip_vel = bucket.point_velocity(&pose0.bucket_tip);
    let soil = soil_reaction(
        &pose1.bucket_polygon,
        tip_vel,
        &state.terrain,
        &scene.material,
        g.bucket_width,
        grav,
        dt,
    );
    soil.apply(&mut state.terrain);
    state.bucket_soil_mass += soil.removed_volume * scene.material.density;
    report.soil_force = soil.force;
    report.removed_volume = soil.removed_volume;

    // rock velocity constraints
    let rock = &scene.rock;
    let mass = rock.mass();
    let rock_pos = state.rock_pose.position();
    let rock_vel = Vec2::new(state.rock_vel[0], state.rock_vel[1] - grav * dt);
    let mut bodies = [
        Body::dynamic(rock_pos, rock_vel, state.rock_vel[2], mass, rock.inertia()),
        bucket,
        Body::fixed(Vec2::zeros()),
    ];
    let rock_poly = scene.rock_polygon(&state.rock_pose);
    let rock_speed = rock_vel.norm() + state.rock_vel[2].abs() * rock.clearance_radius();
    let bucket_reach = g.bucket_polygon.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bucket_speed = pivot_vel.norm() + bucket_omega.abs() * bucket_reach;

    let mut contacts = Vec::new();
    let margin = p.speculative_margin + (rock_speed + bucket_speed) * dt;
    for piece in &pose0.bucket_pieces {
        for cp in collide_convex(piece, &rock_poly, margin) {
            contacts.push(Contact::new(
                BUCKET,
                ROCK,
                cp.point,
                cp.normal,
                cp.separation,
                p.friction_rock_bucket,
            ));
        }
    }
    let n_bucket = contacts.len();
    let ground_margin = p.speculative_margin + rock_speed * dt;
    for v in &rock_poly {
        let s = state.terrain.slope_at(v.x);
        let normal = Vec2::new(-s, 1.0).normalize();
        let separation = (v.y - state.terrain.height_at(v.x)) * normal.y;
        if separation < ground_margin {
            contacts.push(Contact::new(GROUND, ROCK, *v, normal, separation, p.friction_rock_terrain));
        }
    }
    let n_ground = contacts.len() - n_bucket;
    if n_ground > 0 {
        // the soil yields once the rock load exceeds its bearing capacity
        let (x0, x1) = contacts[n_bucket..]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.point.x), b.max(c.point.x)));
        let footing = (x1 - x0).max(MIN_FOOTING);
        let capacity = scene.material.bearing_pressure(footing, grav) * footing * rock.effective_depth;
        let cap = capacity * dt / n_ground as f64;
        for c in &mut contacts[n_bucket..] {
            c.max_normal_impulse = cap;
        }
    }
    solve_velocities(&mut bodies, &mut contacts, dt, p.solver_iterations);

    for c in &contacts[..n_bucket] {
        report.bucket_normal_impulse += c.normal_impulse;
        report.bucket_tangent_impulse += c.tangent_impulse.abs();
    }
    for c in &contacts[n_bucket..] {
        report.terrain_normal_impulse += c.normal_impulse;
    }
    report.bucket_contacts = n_bucket;
    report.terrain_contacts = n_ground;

    // soil drag on the buried part of the rock, implicit
    let mut vel = bodies[ROCK].velocity;
    let mut omega = bodies[ROCK].angular_velocity;
    let (z_lo, z_hi) = rock_poly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v.y), b.max(v.y)));
    let buried = ((state.terrain.height_at(rock_pos.x) - z_lo) / (z_hi - z_lo)).clamp(0.0, 1.0);
    if buried > 0.0 {
        let rate = p.soil_drag * scene.material.density / rock.density * buried;
        vel /= 1.0 + rate * dt;
        omega /= 1.0 + rate * dt;
    }

    state.rock_pose.x += vel.x * dt;
    state.rock_pose.z += vel.y * dt;
    state.rock_pose.angle += omega * dt;
    state.rock_vel = [vel.x, vel.y, omega];

    let kick: f64 = rng.sample(StandardNormal);
    state.rock_lateral_y += kick * p.lateral_kick_gain * report.bucket_tangent_impulse / mass;

    // position projection: out of the shell first, then the soil gives way
    let slop = 0.25 * p.penetration_tolerance;
    for _ in 0..2 * p.position_iterations {
        let mut moved = false;
        for piece in &pose1.bucket_pieces {
            let poly = scene.rock_polygon(&state.rock_pose);
            if let Some((axis, depth)) = minimum_translation(piece, &poly) {
                if depth > slop {
                    state.rock_pose.x += axis.x * depth;
                    state.rock_pose.z += axis.y * depth;
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    // spill from the bucket
    let capacity = scene.bucket_capacity();
    let mut spill = (state.bucket_soil_mass - capacity).max(0.0);
    let mouth = pose1.mouth_normal();
    if mouth.y < 0.0 {
        let rest = state.bucket_soil_mass - spill;
        spill += rest * (-mouth.y * SPILL_RATE * dt).min(1.0);
    }
    if spill > 0.0 {
        state.bucket_soil_mass -= spill;
        let area = spill / (scene.material.density * g.bucket_width);
        state.terrain.deposit(pose1.bucket_tip.x, 0.3, area);
        report.spilled_mass = spill;
    }
    let (x0, x1) = rock_extent(&scene.rock_polygon(&state.rock_pose));
    let frozen = state.terrain.nodes_between(x0 - state.terrain.cell_size, x1 + state.terrain.cell_size);
    state.terrain.relax_around(
        scene.material.internal_friction_angle.tan(),
        RELAX_PASSES,
        frozen,
    );

    let rock_now = scene.rock_polygon(&state.rock_pose);
    let displaced = carve_under(&mut state.terrain, &rock_now);
    let (x0, x1) = rock_extent(&rock_now);
    if displaced > 0.0 {
        state.terrain.deposit(x0 - 0.35, 0.25, 0.5 * displaced);
        state.terrain.deposit(x1 + 0.35, 0.25, 0.5 * displaced);
    }
    report.displaced_area = displaced;

    // loads on the machine
    let mut loads: Vec<(Vec2, Vec2)> = contacts[..n_bucket]
        .iter()
        .filter(|c| c.normal_impulse != 0.0 || c.tangent_impulse != 0.0)
        .map(|c| (c.point, -c.impulse() / dt))
        .collect();
    if soil.force != Vec2::zeros() {
        loads.push((soil.point, soil.force));
    }
    if state.bucket_soil_mass > 0.0 {
        loads.push((pose1.cavity_center, Vec2::new(0.0, -state.bucket_soil_mass * grav)));
    }
    state.joint_forces = joint_forces(g, &pose1, &loads, grav);
    state.cabin_pitch = cabin_pitch(g, p, &loads);
    if report.bucket_supported() {
        let restoring = g.machine_mass * grav * g.track_half_gauge;
        let stiffness = p.tilt_compliance_fraction * restoring / 0.1;
        state.cabin_roll = (mass * grav * state.rock_lateral_y / stiffness).atan();
    } else {
        state.cabin_roll *= (-dt / p.roll_decay_time).exp();
    }

    state.sim_time += dt;
    assert!(state.is_finite(), "world produced a non-finite value");
    report
}
