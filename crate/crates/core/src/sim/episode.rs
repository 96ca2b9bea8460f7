//! Recorded rollouts and their binary file format.
//!
//! Layout (little-endian): magic `ODYN`, u32 version, u32 T, u32 N, u32 W,
//! u32 H, then for each step: RGB f32[W*H*3], depth f32[W*H], masks
//! u8[N*W*H], positions f32[N*3], velocities f32[N*3], control f32[6].

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::V2;
use super::policy::ScriptedPolicy;
use super::render::render;
use super::world::{Body, Pusher, WorldState};
use super::SimConfig;
use crate::binio::{self, put_f32s, put_u32, Reader};
use crate::error::{Error, Result};

pub const EPISODE_MAGIC: &[u8; 4] = b"ODYN";
pub const EPISODE_VERSION: u32 = 1;
const PLACEMENT_ATTEMPTS: usize = 1000;
/// Minimum clearance between freshly placed bodies.
const PLACEMENT_GAP: f64 = 0.03;

/// Everything recorded at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// `[H, W, 3]`, values in `[0, 1]`.
    pub rgb: Vec<f32>,
    /// `[H, W]`, object height over the depth scale, background 0.
    pub depth: Vec<f32>,
    /// `[N, H, W]`, binary.
    pub masks: Vec<u8>,
    pub pos: Vec<[f32; 3]>,
    pub vel: Vec<[f32; 3]>,
    /// Pusher position and velocity at the next step.
    pub control: [f32; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub n: usize,
    pub w: usize,
    pub h: usize,
    pub frames: Vec<Frame>,
}

impl Episode {
    /// Number of recorded steps.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mask of object `i` at step `t` (0-based).
    pub fn mask(&self, t: usize, i: usize) -> &[u8] {
        let px = self.w * self.h;
        &self.frames[t].masks[i * px..(i + 1) * px]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let px = self.w * self.h;
        let mut out =
            Vec::with_capacity(24 + self.len() * (px * 16 + self.n * px + self.n * 24 + 24));
        out.extend_from_slice(EPISODE_MAGIC);
        put_u32(&mut out, EPISODE_VERSION);
        for (v, what) in [
            (self.len(), "step count"),
            (self.n, "object count"),
            (self.w, "width"),
            (self.h, "height"),
        ] {
            put_u32(&mut out, binio::to_u32(v, what)?);
        }
        for f in &self.frames {
            if f.rgb.len() != px * 3
                || f.depth.len() != px
                || f.masks.len() != self.n * px
                || f.pos.len() != self.n
                || f.vel.len() != self.n
            {
                return Err(Error::Config(
                    "frame buffers disagree with the episode dimensions".into(),
                ));
            }
            put_f32s(&mut out, f.rgb.iter().copied());
            put_f32s(&mut out, f.depth.iter().copied());
            out.extend_from_slice(&f.masks);
            put_f32s(&mut out, f.pos.iter().flatten().copied());
            put_f32s(&mut out, f.vel.iter().flatten().copied());
            put_f32s(&mut out, f.control);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(buf, "episode", path);
        r.expect_magic(EPISODE_MAGIC)?;
        let version = r.u32()?;
        if version != EPISODE_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let t = r.u32()? as usize;
        let n = r.u32()? as usize;
        let w = r.u32()? as usize;
        let h = r.u32()? as usize;
        if w == 0 || h == 0 {
            return Err(r.error(format!("empty frame size {w}x{h}")));
        }
        let px = w
            .checked_mul(h)
            .ok_or_else(|| r.error("frame size overflow"))?;
        let step_bytes = px
            .checked_mul(16)
            .and_then(|b| b.checked_add(n.checked_mul(px)?))
            .and_then(|b| b.checked_add(n * 24 + 24))
            .ok_or_else(|| r.error("step size overflow"))?;
        if t.checked_mul(step_bytes)
            .map_or(true, |total| total + 24 != buf.len())
        {
            return Err(r.error(format!(
                "length {} does not match T={t}, N={n}, {w}x{h}",
                buf.len()
            )));
        }
        let triples = |v: Vec<f32>| {
            v.chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect::<Vec<_>>()
        };
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let rgb = r.f32s(px * 3)?;
            let depth = r.f32s(px)?;
            let masks = r.bytes(n * px)?.to_vec();
            if masks.iter().any(|&m| m > 1) {
                return Err(r.error("mask values must be 0 or 1"));
            }
            let pos = triples(r.f32s(n * 3)?);
            let vel = triples(r.f32s(n * 3)?);
            let c = r.f32s(6)?;
            frames.push(Frame {
                rgb,
                depth,
                masks,
                pos,
                vel,
                control: [c[0], c[1], c[2], c[3], c[4], c[5]],
            });
        }
        r.finish()?;
        Ok(Episode { n, w, h, frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?, path)
    }
}

fn record(world: &WorldState, cfg: &SimConfig, control: [f32; 6]) -> Frame {
    let r = render(world, cfg.width, cfg.height);
    Frame {
        rgb: r.rgb,
        depth: r.depth,
        masks: r.masks,
        pos: world
            .objects
            .iter()
            .map(|b| [b.pos[0] as f32, b.pos[1] as f32, (b.height / 2.0) as f32])
            .collect(),
        vel: world
            .objects
            .iter()
            .map(|b| [b.vel[0] as f32, b.vel[1] as f32, 0.0])
            .collect(),
        control,
    }
}

fn pusher_state(p: &Pusher) -> [f32; 6] {
    [
        p.pos[0] as f32,
        p.pos[1] as f32,
        p.z as f32,
        p.vel[0] as f32,
        p.vel[1] as f32,
        0.0,
    ]
}

/// Samples a non-overlapping initial layout in the central `clutter`
/// fraction of the container, plus a free spot for the pusher.
pub fn initial_world(cfg: &SimConfig, rng: &mut impl Rng) -> Result<WorldState> {
    let container = cfg.container();
    let mut shapes = cfg.shape_ids.clone();
    shapes.shuffle(rng);
    let mut world = WorldState {
        objects: Vec::with_capacity(shapes.len()),
        pusher: Pusher {
            pos: [0.0, 0.0],
            vel: [0.0, 0.0],
            radius: cfg.pusher_radius,
            z: 0.9,
        },
        container,
        t: 0,
        physics: cfg.physics,
    };
    let region = |r: f64, k: usize, frac: f64| {
        let half = (container[k] * frac / 2.0).max(r);
        let c = container[k] / 2.0;
        ((c - half).max(r), (c + half).min(container[k] - r))
    };
    let mut attempts = 0;
    for &shape in &shapes {
        loop {
            attempts += 1;
            if attempts > PLACEMENT_ATTEMPTS {
                return Err(Error::Placement {
                    objects: shapes.len(),
                    attempts: PLACEMENT_ATTEMPTS,
                });
            }
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let probe = Body::new(shape, cfg.object_size, [0.0, 0.0], angle);
            let r = probe.radius();
            let (x0, x1) = region(r, 0, cfg.clutter);
            let (y0, y1) = region(r, 1, cfg.clutter);
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            let pos: V2 = [rng.gen_range(x0..x1), rng.gen_range(y0..y1)];
            let body = Body::new(shape, cfg.object_size, pos, angle);
            let verts = body.vertices();
            let clear = world.objects.iter().all(|o| {
                super::geometry::polygon_separation(&o.vertices(), &verts).0 > PLACEMENT_GAP
            });
            if clear {
                world.objects.push(body);
                break;
            }
        }
    }
    let r = cfg.pusher_radius;
    loop {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                objects: shapes.len(),
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
        let pos = [
            rng.gen_range(r..container[0] - r),
            rng.gen_range(r..container[1] - r),
        ];
        let clear = world
            .objects
            .iter()
            .all(|o| super::geometry::disc_separation(&o.vertices(), pos, r).0 > PLACEMENT_GAP);
        if clear {
            world.pusher.pos = pos;
            break;
        }
    }
    Ok(world)
}

/// Rolls out the scripted policy from a seeded initial layout. The control of
/// step `t` is the pusher state at `t + 1`; the last step repeats the final
/// pusher state.
pub fn generate_episode(cfg: &SimConfig, seed: u64) -> Result<Episode> {
    generate_with_states(cfg, seed).map(|(ep, _)| ep)
}

/// Like [`generate_episode`], also returning the world state behind every
/// recorded frame.
pub fn generate_with_states(cfg: &SimConfig, seed: u64) -> Result<(Episode, Vec<WorldState>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rng.gen_range(cfg.min_steps..=cfg.max_steps);
    let mut world = initial_world(cfg, &mut rng)?;
    let mut policy = ScriptedPolicy::new(&world, cfg.policy);
    let mut states = vec![world.clone()];
    for _ in 1..steps {
        let cmd = policy.act(&world, &mut rng);
        world.step(policy.velocity(cmd))?;
        states.push(world.clone());
    }
    let frames = states
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let next = states.get(t + 1).unwrap_or(s);
            record(s, cfg, pusher_state(&next.pusher))
        })
        .collect();
    let ep = Episode {
        n: cfg.shape_ids.len(),
        w: cfg.width,
        h: cfg.height,
        frames,
    };
    Ok((ep, states))
}
