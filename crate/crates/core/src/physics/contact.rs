//! Sequential-impulse contact solver for planar rigid bodies.
//!
//! Contacts are speculative: a pair that is still apart by `separation` may
//! close that gap within the step but not more. Restitution is zero.

use crate::geom::{cross, cross_sv, perp, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    /// Reference point angular velocity acts about.
    pub position: Vec2,
    pub velocity: Vec2,
    pub angular_velocity: f64,
    pub inv_mass: f64,
    pub inv_inertia: f64,
}

impl Body {
    pub fn fixed(position: Vec2) -> Self {
        Self::kinematic(position, Vec2::zeros(), 0.0)
    }

    /// Infinite-mass body moving with a prescribed velocity field.
    pub fn kinematic(position: Vec2, velocity: Vec2, angular_velocity: f64) -> Self {
        Self {
            position,
            velocity,
            angular_velocity,
            inv_mass: 0.0,
            inv_inertia: 0.0,
        }
    }

    pub fn dynamic(position: Vec2, velocity: Vec2, angular_velocity: f64, mass: f64, inertia: f64) -> Self {
        assert!(mass > 0.0 && inertia > 0.0);
        Self {
            position,
            velocity,
            angular_velocity,
            inv_mass: 1.0 / mass,
            inv_inertia: 1.0 / inertia,
        }
    }

    #[inline]
    pub fn point_velocity(&self, p: &Vec2) -> Vec2 {
        self.velocity + cross_sv(self.angular_velocity, &(p - self.position))
    }

    #[inline]
    fn apply_impulse(&mut self, impulse: &Vec2, p: &Vec2) {
        self.velocity += impulse * self.inv_mass;
        self.angular_velocity += self.inv_inertia * cross(&(p - self.position), impulse);
    }

    pub fn momentum(&self) -> Option<Vec2> {
        (self.inv_mass > 0.0).then(|| self.velocity / self.inv_mass)
    }

    pub fn kinetic_energy(&self) -> f64 {
        let lin = if self.inv_mass > 0.0 {
            0.5 * self.velocity.norm_squared() / self.inv_mass
        } else {
            0.0
        };
        let ang = if self.inv_inertia > 0.0 {
            0.5 * self.angular_velocity.powi(2) / self.inv_inertia
        } else {
            0.0
        };
        lin + ang
    }
}

/// A contact between bodies `a` and `b`; `normal` points from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub a: usize,
    pub b: usize,
    pub point: Vec2,
    pub normal: Vec2,
    pub separation: f64,
    pub friction: f64,
    /// Upper bound on the accumulated normal impulse (N·s).
    pub max_normal_impulse: f64,
    /// Accumulated impulses after solving.
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
}

impl Contact {
    pub fn new(a: usize, b: usize, point: Vec2, normal: Vec2, separation: f64, friction: f64) -> Self {
        Self {
            a,
            b,
            point,
            normal,
            separation,
            friction,
            max_normal_impulse: f64::INFINITY,
            normal_impulse: 0.0,
            tangent_impulse: 0.0,
        }
    }

    /// Impulse `b` received (`a` received the negative).
    pub fn impulse(&self) -> Vec2 {
        self.normal * self.normal_impulse + perp(&self.normal) * self.tangent_impulse
    }
}

fn effective_mass(a: &Body, b: &Body, p: &Vec2, dir: &Vec2) -> f64 {
    let ra = cross(&(p - a.position), dir);
    let rb = cross(&(p - b.position), dir);
    let k = a.inv_mass + b.inv_mass + a.inv_inertia * ra * ra + b.inv_inertia * rb * rb;
    if k > 0.0 {
        1.0 / k
    } else {
        0.0
    }
}

fn pair(bodies: &mut [Body], a: usize, b: usize) -> (&mut Body, &mut Body) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = bodies.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = bodies.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Solves the velocity constraints of `contacts` in place. Accumulated
/// impulses are left in each contact.
pub fn solve_velocities(bodies: &mut [Body], contacts: &mut [Contact], dt: f64, iterations: usize) {
    let masses: Vec<(f64, f64)> = contacts
        .iter()
        .map(|c| {
            let (a, b) = (&bodies[c.a], &bodies[c.b]);
            let t = perp(&c.normal);
            (
                effective_mass(a, b, &c.point, &c.normal),
                effective_mass(a, b, &c.point, &t),
            )
        })
        .collect();

    for _ in 0..iterations {
        for (c, &(mn, mt)) in contacts.iter_mut().zip(&masses) {
            if mn == 0.0 {
                continue;
            }
            let (a, b) = pair(bodies, c.a, c.b);
            let t = perp(&c.normal);

            if c.friction > 0.0 {
                let vt = (b.point_velocity(&c.point) - a.point_velocity(&c.point)).dot(&t);
                let limit = c.friction * c.normal_impulse;
                let new = (c.tangent_impulse - vt * mt).clamp(-limit, limit);
                let d = new - c.tangent_impulse;
                c.tangent_impulse = new;
                let j = t * d;
                a.apply_impulse(&-j, &c.point);
                b.apply_impulse(&j, &c.point);
            }

            let vn = (b.point_velocity(&c.point) - a.point_velocity(&c.point)).dot(&c.normal);
            let target = -c.separation.max(0.0) / dt;
            let new = (c.normal_impulse + (target - vn) * mn).clamp(0.0, c.max_normal_impulse);
            let d = new - c.normal_impulse;
            c.normal_impulse = new;
            let j = c.normal * d;
            a.apply_impulse(&-j, &c.point);
            b.apply_impulse(&j, &c.point);
        }
    }
}
