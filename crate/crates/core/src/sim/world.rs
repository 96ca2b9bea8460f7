//! Planar rigid-body world: translating convex prisms, a kinematic disc
//! pusher and four container walls.
//!
//! Each step applies linear damping, resolves contacts with sequential
//! normal impulses (speculative for approaching pairs, so bodies stop at
//! the contact instead of tunnelling), integrates positions, and projects
//! any remaining overlap out. The stored velocity is the realised
//! displacement over `dt`, so positions and velocities stay consistent.

use serde::{Deserialize, Serialize};

use super::geometry::{
    add, disc_separation, dot, norm, polygon_separation, rotate, scale, sub, V2,
};
use super::shapes;
use crate::error::{Error, Result};

/// Speed limit for objects and the pusher, world units per second.
pub const V_MAX: f64 = 5.0;
/// Allowed residual overlap between bodies and with walls.
pub const PENETRATION_TOL: f64 = 1e-3;

const IMPULSE_ITERS: usize = 30;
const PROJECTION_ITERS: usize = 60;
/// Contacts are tracked when bodies are closer than this.
const CONTACT_MARGIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Linear damping rate per second (friction proxy).
    pub friction: f64,
    pub restitution: f64,
    pub dt: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            friction: 2.0,
            restitution: 0.0,
            dt: 0.1,
        }
    }
}

fn clamp_speed(v: V2) -> V2 {
    let s = norm(v);
    if s > V_MAX {
        scale(v, V_MAX / s)
    } else {
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Body {
    pub shape: usize,
    pub pos: V2,
    /// Fixed planar orientation.
    pub angle: f64,
    pub vel: V2,
    pub height: f64,
    pub mass: f64,
    /// Rotated outline relative to `pos`.
    offsets: Vec<V2>,
}

impl Body {
    pub fn new(shape: usize, size: f64, pos: V2, angle: f64) -> Self {
        let offsets = shapes::outline(shape, size)
            .into_iter()
            .map(|p| rotate(p, angle))
            .collect();
        Body {
            shape,
            pos,
            angle,
            vel: [0.0, 0.0],
            height: shapes::height(shape),
            mass: shapes::area(shape, size),
            offsets,
        }
    }

    /// World-space vertices, counter-clockwise.
    pub fn vertices(&self) -> Vec<V2> {
        self.offsets.iter().map(|&o| add(self.pos, o)).collect()
    }

    /// Bounding radius around `pos`.
    pub fn radius(&self) -> f64 {
        self.offsets.iter().map(|&o| norm(o)).fold(0.0, f64::max)
    }

    /// Axis-aligned bounds `(min, max)` of the outline relative to `pos`.
    fn offset_bounds(&self) -> (V2, V2) {
        self.offsets.iter().fold(
            ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
            |(lo, hi), o| {
                (
                    [lo[0].min(o[0]), lo[1].min(o[1])],
                    [hi[0].max(o[0]), hi[1].max(o[1])],
                )
            },
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pusher {
    pub pos: V2,
    pub vel: V2,
    pub radius: f64,
    /// Constant height of the pusher tip above the floor.
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub objects: Vec<Body>,
    pub pusher: Pusher,
    /// Container extents; the interior is `[0, w] x [0, h]`.
    pub container: V2,
    pub t: usize,
    pub physics: Physics,
}

#[derive(Clone, Copy)]
enum Other {
    Body(usize),
    Pusher,
    /// Wall with inward normal.
    Wall(V2),
}

/// A contact acting on body `a` from `b`, with the normal pointing from `b`
/// towards `a`.
#[derive(Clone, Copy)]
struct Contact {
    a: usize,
    b: Other,
    normal: V2,
    gap: f64,
    approach: f64,
    acc: f64,
}

impl WorldState {
    fn other_velocity(&self, b: Other) -> V2 {
        match b {
            Other::Body(j) => self.objects[j].vel,
            Other::Pusher => self.pusher.vel,
            Other::Wall(_) => [0.0, 0.0],
        }
    }

    /// Separation and normal (from `b` towards body `a`).
    fn separation(&self, a: usize, b: Other) -> (f64, V2) {
        let va = self.objects[a].vertices();
        match b {
            Other::Body(j) => polygon_separation(&self.objects[j].vertices(), &va),
            Other::Pusher => {
                let (s, n) = disc_separation(&va, self.pusher.pos, self.pusher.radius);
                (s, scale(n, -1.0))
            }
            Other::Wall(n) => {
                let lo = va.iter().map(|&p| dot(p, n)).fold(f64::INFINITY, f64::min);
                // offset of the wall plane along its inward normal
                let plane = if n[0] + n[1] > 0.0 {
                    0.0
                } else {
                    dot(self.container, n)
                };
                (lo - plane, n)
            }
        }
    }

    fn walls() -> [V2; 4] {
        [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
    }

    fn contacts(&self) -> Vec<Contact> {
        let mut out = Vec::new();
        let n = self.objects.len();
        for a in 0..n {
            let mut others: Vec<Other> = (a + 1..n).map(Other::Body).collect();
            others.push(Other::Pusher);
            others.extend(Self::walls().map(Other::Wall));
            for b in others {
                let (gap, normal) = self.separation(a, b);
                if gap < CONTACT_MARGIN {
                    let rel = sub(self.objects[a].vel, self.other_velocity(b));
                    out.push(Contact {
                        a,
                        b,
                        normal,
                        gap,
                        approach: dot(rel, normal),
                        acc: 0.0,
                    });
                }
            }
        }
        out
    }

    fn solve_impulses(&mut self, contacts: &mut [Contact]) {
        let dt = self.physics.dt;
        for _ in 0..IMPULSE_ITERS {
            for c in contacts.iter_mut() {
                let inv_a = 1.0 / self.objects[c.a].mass;
                let inv_b = match c.b {
                    Other::Body(j) => 1.0 / self.objects[j].mass,
                    _ => 0.0,
                };
                let rel = sub(self.objects[c.a].vel, self.other_velocity(c.b));
                let vn = dot(rel, c.normal);
                // the closing speed may use up the gap but no more
                let target = if c.gap > 0.0 {
                    -c.gap / dt
                } else {
                    (-self.physics.restitution * c.approach).max(0.0)
                };
                let lambda = (target - vn) / (inv_a + inv_b);
                let new_acc = (c.acc + lambda).max(0.0);
                let d = new_acc - c.acc;
                c.acc = new_acc;
                if d == 0.0 {
                    continue;
                }
                let a = &mut self.objects[c.a];
                a.vel = add(a.vel, scale(c.normal, d * inv_a));
                if let Other::Body(j) = c.b {
                    let b = &mut self.objects[j];
                    b.vel = sub(b.vel, scale(c.normal, d * inv_b));
                }
            }
        }
    }

    fn clamp_to_walls(&mut self, i: usize) {
        let (lo, hi) = self.objects[i].offset_bounds();
        let c = self.container;
        let p = &mut self.objects[i].pos;
        for k in 0..2 {
            if p[k] + lo[k] < 0.0 {
                p[k] = -lo[k];
            }
            if p[k] + hi[k] > c[k] {
                p[k] = c[k] - hi[k];
            }
        }
    }

    /// Pushes overlapping bodies apart. Walls are applied last in every pass,
    /// so containment always holds; pusher contacts are dropped in the second
    /// half so a body squeezed against a wall yields to the other constraints.
    fn project_positions(&mut self) {
        let n = self.objects.len();
        for iter in 0..PROJECTION_ITERS {
            let mut worst: f64 = 0.0;
            if iter < PROJECTION_ITERS / 2 {
                for i in 0..n {
                    let (sep, normal) = self.separation(i, Other::Pusher);
                    if sep < 0.0 {
                        worst = worst.max(-sep);
                        let b = &mut self.objects[i];
                        b.pos = add(b.pos, scale(normal, -sep + 1e-6));
                    }
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    let (sep, normal) = self.separation(i, Other::Body(j));
                    if sep < 0.0 {
                        worst = worst.max(-sep);
                        let (ma, mb) = (self.objects[i].mass, self.objects[j].mass);
                        let push = -sep + 1e-6;
                        let (wa, wb) = (mb / (ma + mb), ma / (ma + mb));
                        self.objects[i].pos = add(self.objects[i].pos, scale(normal, push * wa));
                        self.objects[j].pos = sub(self.objects[j].pos, scale(normal, push * wb));
                    }
                }
            }
            for i in 0..n {
                self.clamp_to_walls(i);
            }
            if worst < 1e-6 {
                break;
            }
        }
    }

    /// Largest overlap between two objects, or between an object and a wall.
    pub fn max_penetration(&self) -> f64 {
        let n = self.objects.len();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                worst = worst.max(-self.separation(a, Other::Body(b)).0);
            }
            for w in Self::walls() {
                worst = worst.max(-self.separation(a, Other::Wall(w)).0);
            }
        }
        worst
    }

    fn clamp_pusher(&mut self) {
        let r = self.pusher.radius;
        for k in 0..2 {
            self.pusher.pos[k] = self.pusher.pos[k].clamp(r, self.container[k] - r);
        }
    }

    /// Advances the world by one time step with the pusher moving at
    /// `action` (world units per second).
    pub fn step(&mut self, action: V2) -> Result<()> {
        let dt = self.physics.dt;
        if norm(action) > V_MAX * (1.0 + 1e-12) {
            return Err(Error::Domain {
                op: "step",
                msg: format!("action speed {} exceeds {V_MAX}", norm(action)),
            });
        }
        let damp = (1.0 - self.physics.friction * dt).max(0.0);
        for b in &mut self.objects {
            b.vel = scale(b.vel, damp);
        }
        self.pusher.vel = action;

        let mut contacts = self.contacts();
        self.solve_impulses(&mut contacts);
        for b in &mut self.objects {
            b.vel = clamp_speed(b.vel);
        }

        let start: Vec<V2> = self.objects.iter().map(|b| b.pos).collect();
        for b in &mut self.objects {
            b.pos = add(b.pos, scale(b.vel, dt));
        }
        self.pusher.pos = add(self.pusher.pos, scale(action, dt));
        self.clamp_pusher();
        self.project_positions();

        // Velocity follows the resolved displacement; a projection that shoves
        // a squeezed body further than v_max * dt is reported at v_max.
        for (b, s) in self.objects.iter_mut().zip(&start) {
            b.vel = clamp_speed(scale(sub(b.pos, *s), 1.0 / dt));
        }
        self.t += 1;
        let finite = self
            .objects
            .iter()
            .all(|b| b.pos.iter().chain(&b.vel).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFiniteState(self.t));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(objects: Vec<Body>, pusher_pos: V2) -> WorldState {
        WorldState {
            objects,
            pusher: Pusher {
                pos: pusher_pos,
                vel: [0.0, 0.0],
                radius: 0.15,
                z: 0.5,
            },
            container: [4.0, 3.0],
            t: 0,
            physics: Physics {
                friction: 0.0,
                ..Physics::default()
            },
        }
    }

    #[test]
    fn free_object_moves_exactly() {
        let mut b = Body::new(0, 0.8, [1.0, 1.5], 0.3);
        b.vel = [1.0, 0.0];
        let mut w = world(vec![b], [3.8, 2.8]);
        w.step([0.0, 0.0]).unwrap();
        let o = &w.objects[0];
        assert!((o.pos[0] - 1.1).abs() < 1e-9);
        assert!((o.pos[1] - 1.5).abs() < 1e-9);
        assert_eq!(o.angle, 0.3);
        assert!((o.vel[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn damping_slows_free_motion() {
        let mut b = Body::new(0, 0.8, [1.0, 1.5], 0.0);
        b.vel = [1.0, 0.0];
        let mut w = world(vec![b], [3.8, 2.8]);
        w.physics.friction = 2.0;
        w.step([0.0, 0.0]).unwrap();
        assert!((w.objects[0].vel[0] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn pushing_into_wall_keeps_object_inside() {
        let b = Body::new(2, 0.8, [3.55, 1.5], 0.0);
        let mut w = world(vec![b], [2.9, 1.5]);
        for _ in 0..20 {
            w.step([2.0, 0.0]).unwrap();
            assert!(w.max_penetration() <= PENETRATION_TOL);
        }
    }

    #[test]
    fn head_on_push_transfers_normal_velocity() {
        // a square pushed along +x by the disc
        let b = Body::new(2, 0.8, [2.0, 1.5], 0.0);
        let left = b
            .vertices()
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min);
        let mut w = world(vec![b], [left - 0.2, 1.5]);
        let speed = 1.0;
        for _ in 0..4 {
            w.step([speed, 0.0]).unwrap();
        }
        let v = w.objects[0].vel;
        assert!((v[0] - speed).abs() <= 0.1 * speed, "object velocity {v:?}");
        assert!(v[1].abs() < 1e-6);
    }

    #[test]
    fn colliding_objects_do_not_overlap() {
        let mut a = Body::new(0, 0.8, [1.0, 1.5], 0.0);
        let mut b = Body::new(1, 0.8, [2.6, 1.5], 0.4);
        a.vel = [4.0, 0.0];
        b.vel = [-4.0, 0.0];
        let mut w = world(vec![a, b], [0.3, 0.3]);
        for _ in 0..10 {
            w.step([0.0, 0.0]).unwrap();
            assert!(
                w.max_penetration() <= PENETRATION_TOL,
                "{}",
                w.max_penetration()
            );
        }
    }

    #[test]
    fn rejects_excessive_action() {
        let mut w = world(vec![], [1.0, 1.0]);
        assert!(w.step([V_MAX * 2.0, 0.0]).is_err());
    }

    #[test]
    fn non_finite_state_reports_step() {
        let mut b = Body::new(0, 0.8, [1.0, 1.5], 0.0);
        b.vel = [f64::NAN, 0.0];
        let mut w = world(vec![b], [3.5, 2.5]);
        w.t = 4;
        match w.step([0.0, 0.0]) {
            Err(Error::NonFiniteState(t)) => assert_eq!(t, 5),
            other => panic!("{other:?}"),
        }
    }
}
