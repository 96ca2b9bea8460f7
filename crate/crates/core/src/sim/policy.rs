//! Scripted singulation policy: pick the most crowded object and shove it
//! away from the others with axis-aligned pusher moves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{dot, sub, V2};
use super::world::WorldState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Left,
    Right,
    Forward,
    Backward,
}

impl Command {
    pub const ALL: [Command; 4] = [
        Command::Left,
        Command::Right,
        Command::Forward,
        Command::Backward,
    ];

    pub fn direction(self) -> V2 {
        match self {
            Command::Left => [-1.0, 0.0],
            Command::Right => [1.0, 0.0],
            Command::Forward => [0.0, 1.0],
            Command::Backward => [0.0, -1.0],
        }
    }

    /// Command along the dominant axis of `d`; x wins ties and a zero vector
    /// maps to `Right`.
    pub fn dominant(d: V2) -> Command {
        if d[0].abs() >= d[1].abs() {
            if d[0] >= 0.0 {
                Command::Right
            } else {
                Command::Left
            }
        } else if d[1] >= 0.0 {
            Command::Forward
        } else {
            Command::Backward
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Probability of replacing the scripted move with a uniformly random one.
    pub epsilon: f64,
    /// Pusher speed, world units per second.
    pub speed: f64,
    /// Once the target is this far from the others' centroid the policy
    /// picks the next most crowded object.
    pub separation_target: f64,
    /// Lateral slack when lining up behind the target.
    pub align_tol: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            epsilon: 0.2,
            speed: 1.5,
            separation_target: 1.5,
            align_tol: 0.15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub target: usize,
    pub config: PolicyConfig,
}

fn centroid_of_others(world: &WorldState, i: usize) -> Option<V2> {
    let n = world.objects.len();
    if n < 2 {
        return None;
    }
    let mut c = [0.0, 0.0];
    for (_, b) in world.objects.iter().enumerate().filter(|&(j, _)| j != i) {
        c[0] += b.pos[0];
        c[1] += b.pos[1];
    }
    Some([c[0] / (n - 1) as f64, c[1] / (n - 1) as f64])
}

fn distance_to_others(world: &WorldState, i: usize) -> f64 {
    centroid_of_others(world, i).map_or(f64::INFINITY, |c| {
        let d = sub(world.objects[i].pos, c);
        d[0].hypot(d[1])
    })
}

/// The object closest to the centroid of the others; ties (within 1e-9)
/// go to the lowest index.
pub fn most_crowded(world: &WorldState) -> usize {
    (0..world.objects.len()).fold(0, |best, i| {
        if distance_to_others(world, i) < distance_to_others(world, best) - 1e-9 {
            i
        } else {
            best
        }
    })
}

impl ScriptedPolicy {
    pub fn new(world: &WorldState, config: PolicyConfig) -> Self {
        ScriptedPolicy {
            target: most_crowded(world),
            config,
        }
    }

    /// The scripted move: line up behind the target on the side facing the
    /// others, then push.
    pub fn greedy(&mut self, world: &WorldState) -> Command {
        if world.objects.is_empty() {
            return Command::Right;
        }
        if distance_to_others(world, self.target) > self.config.separation_target {
            self.target = most_crowded(world);
        }
        let target = &world.objects[self.target];
        let away =
            centroid_of_others(world, self.target).map_or([1.0, 0.0], |c| sub(target.pos, c));
        let push = Command::dominant(away);
        let dir = push.direction();
        let standoff = target.radius() + world.pusher.radius + 0.05;
        let behind = [
            target.pos[0] - dir[0] * standoff,
            target.pos[1] - dir[1] * standoff,
        ];
        let err = sub(behind, world.pusher.pos);
        let lateral = [dir[1], -dir[0]];
        let is_behind = dot(sub(world.pusher.pos, target.pos), dir) < 0.0;
        if is_behind && dot(err, lateral).abs() <= self.config.align_tol {
            push
        } else {
            Command::dominant(err)
        }
    }

    pub fn act(&mut self, world: &WorldState, rng: &mut impl Rng) -> Command {
        let scripted = self.greedy(world);
        if rng.gen_bool(self.config.epsilon.clamp(0.0, 1.0)) {
            Command::ALL[rng.gen_range(0..4)]
        } else {
            scripted
        }
    }

    pub fn velocity(&self, c: Command) -> V2 {
        let d = c.direction();
        [d[0] * self.config.speed, d[1] * self.config.speed]
    }
}

#[cfg(test)]
mod tests {
    use super::super::world::{Body, Physics, Pusher};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(positions: &[V2], pusher: V2) -> WorldState {
        WorldState {
            objects: positions
                .iter()
                .map(|&p| Body::new(2, 0.6, p, 0.0))
                .collect(),
            pusher: Pusher {
                pos: pusher,
                vel: [0.0; 2],
                radius: 0.15,
                z: 0.5,
            },
            container: [4.0, 3.0],
            t: 0,
            physics: Physics::default(),
        }
    }

    #[test]
    fn pushes_target_away_from_the_others() {
        // object 0 sits left of the others
        let w = world(
            &[[1.6, 1.5], [2.4, 1.3], [2.4, 1.7], [3.5, 1.5]],
            [2.25, 1.5],
        );
        let p = ScriptedPolicy::new(&w, PolicyConfig::default());
        // objects 1 and 2 are equally crowded
        assert_eq!(p.target, 1);
        let mut p = ScriptedPolicy { target: 0, ..p };
        assert_eq!(p.greedy(&w), Command::Left);
    }

    #[test]
    fn moves_around_to_get_behind() {
        // pusher on the wrong side of the target: it must not push yet
        let w = world(&[[1.6, 1.5], [2.6, 1.5]], [0.6, 1.5]);
        let mut p = ScriptedPolicy {
            target: 0,
            config: PolicyConfig::default(),
        };
        assert_ne!(p.greedy(&w), Command::Left);
    }

    #[test]
    fn symmetric_layout_picks_lowest_id() {
        let w = world(&[[1.0, 1.5], [2.0, 1.5], [3.0, 1.5]], [0.3, 0.3]);
        // ends are equidistant from their others' centroids, the middle is closest
        assert_eq!(most_crowded(&w), 1);
        let w = world(
            &[[1.0, 1.0], [3.0, 1.0], [1.0, 2.0], [3.0, 2.0]],
            [0.3, 0.3],
        );
        assert_eq!(most_crowded(&w), 0);
        assert_eq!(Command::dominant([1.0, 1.0]), Command::Right);
        assert_eq!(Command::dominant([0.0, 0.0]), Command::Right);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let w = world(&[[1.0, 1.0], [3.0, 2.0]], [0.3, 0.3]);
        let mut p = ScriptedPolicy::new(
            &w,
            PolicyConfig {
                epsilon: 1.0,
                ..PolicyConfig::default()
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        for _ in 0..1000 {
            let c = p.act(&w, &mut rng);
            counts[Command::ALL.iter().position(|&x| x == c).unwrap()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 250.0).powi(2) / 250.0)
            .sum();
        // 99th percentile of chi-squared with 3 degrees of freedom
        assert!(chi2 < 11.345, "counts {counts:?}, chi2 {chi2}");
    }
}
