//! Deterministic top-down pushing simulator that produces the episodes the
//! predictors learn from.

mod dataset;
mod episode;
pub mod geometry;
mod policy;
mod render;
pub mod shapes;
mod world;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dataset::{
    generate_dataset, load_dataset, Dataset, Manifest, ManifestEntry, MANIFEST_FILE,
};
pub use episode::{
    generate_episode, generate_with_states, initial_world, Episode, Frame, EPISODE_MAGIC,
    EPISODE_VERSION,
};
pub use policy::{most_crowded, Command, PolicyConfig, ScriptedPolicy};
pub use render::{occlusion_order, pixel_center, render, Render, BACKGROUND, DEPTH_SCALE};
pub use world::{Body, Physics, Pusher, WorldState, PENETRATION_TOL, V_MAX};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    /// Container width in world units; the height follows the image aspect
    /// ratio so pixels are square.
    pub container_width: f64,
    /// Shape of every object, one entry per object.
    pub shape_ids: Vec<usize>,
    /// Scale applied to the library outlines.
    pub object_size: f64,
    pub physics: Physics,
    pub min_steps: usize,
    pub max_steps: usize,
    pub policy: PolicyConfig,
    pub pusher_radius: f64,
    /// Central fraction of the container in which objects start.
    pub clutter: f64,
}

impl SimConfig {
    /// Desk-scale configuration for the given shapes and episode lengths.
    pub fn desk(shape_ids: Vec<usize>, min_steps: usize, max_steps: usize) -> Self {
        SimConfig {
            width: 32,
            height: 24,
            container_width: 4.0,
            shape_ids,
            object_size: 0.9,
            physics: Physics::default(),
            min_steps,
            max_steps,
            policy: PolicyConfig::default(),
            pusher_radius: 0.15,
            clutter: 0.7,
        }
    }

    pub fn container(&self) -> [f64; 2] {
        [
            self.container_width,
            self.container_width * self.height as f64 / self.width as f64,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!(
                "frame size {}x{} is empty",
                self.width, self.height
            ));
        }
        if let Some(id) = self
            .shape_ids
            .iter()
            .find(|&&id| id >= shapes::LIBRARY_SIZE)
        {
            return bad(format!(
                "shape id {id} outside the library of {}",
                shapes::LIBRARY_SIZE
            ));
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return bad(format!(
                "episode length range {}..={} is empty",
                self.min_steps, self.max_steps
            ));
        }
        if !(self.physics.dt > 0.0) || !(self.container_width > 0.0) || !(self.object_size > 0.0) {
            return bad("dt, container width and object size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.policy.epsilon)
            || self.policy.speed > V_MAX
            || self.policy.speed < 0.0
        {
            return bad("policy epsilon must lie in [0, 1] and speed in [0, v_max]".into());
        }
        Ok(())
    }
}

/// The dataset roles: one training set and three test sets of increasing
/// novelty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train3,
    Test3,
    #[serde(rename = "test5_2novel")]
    Test5TwoNovel,
    #[serde(rename = "test5_5novel")]
    Test5FiveNovel,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Train3,
        Role::Test3,
        Role::Test5TwoNovel,
        Role::Test5FiveNovel,
    ];
    pub const TEST: [Role; 3] = [Role::Test3, Role::Test5TwoNovel, Role::Test5FiveNovel];

    pub fn name(self) -> &'static str {
        match self {
            Role::Train3 => "train3",
            Role::Test3 => "test3",
            Role::Test5TwoNovel => "test5_2novel",
            Role::Test5FiveNovel => "test5_5novel",
        }
    }

    pub fn shape_ids(self) -> Vec<usize> {
        match self {
            Role::Train3 | Role::Test3 => shapes::KNOWN.to_vec(),
            Role::Test5TwoNovel => shapes::KNOWN
                .iter()
                .chain(&shapes::NOVEL[..2])
                .copied()
                .collect(),
            Role::Test5FiveNovel => shapes::NOVEL.to_vec(),
        }
    }

    /// Inclusive episode length range.
    pub fn steps(self) -> (usize, usize) {
        match self {
            Role::Train3 | Role::Test3 => (7, 15),
            Role::Test5TwoNovel | Role::Test5FiveNovel => (7, 50),
        }
    }

    pub fn config(self, width: usize, height: usize) -> SimConfig {
        let (lo, hi) = self.steps();
        SimConfig {
            width,
            height,
            ..SimConfig::desk(self.shape_ids(), lo, hi)
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset role `{s}` (expected train3, test3, test5_2novel or test5_5novel)")))
    }
}
