//! The predictor families (graph network, auto-predictor, baseline), their
//! ablation variants, losses and checkpoints.

mod checkpoint;
mod config;
pub mod input;
mod latent;
mod loss;
mod predictor;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{LossConfig, Mlp, ModelConfig, NetSpecs, Preset, Reduction};
pub use latent::{
    pretrain_memorization_ae, AePretrainConfig, AePretrainReport, LatentTargetEncoder,
};
pub use loss::{latent_loss, loss_eq1, StepTargets};
pub use predictor::{Model, Predictor, StepOutput};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Graph network with position/velocity nodes and edges.
    GnPosVel,
    /// Graph network with visual nodes and segmentation-mask edges.
    GnSegm,
    /// As `GnSegm` with only the object mask as node input.
    GnSegmNoRgbd,
    /// Graph network without edges.
    GnNoEdges,
    /// Auto-predictor.
    Ap,
    /// Auto-predictor without the interaction term.
    ApNoInteract,
    /// Encoder/decoder conditioned on the control, no object relations.
    Baseline,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::GnPosVel,
        ModelVariant::GnSegm,
        ModelVariant::GnSegmNoRgbd,
        ModelVariant::GnNoEdges,
        ModelVariant::Ap,
        ModelVariant::ApNoInteract,
        ModelVariant::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::GnPosVel => "gn_pos_vel",
            ModelVariant::GnSegm => "gn_segm",
            ModelVariant::GnSegmNoRgbd => "gn_segm_no_rgbd",
            ModelVariant::GnNoEdges => "gn_no_edges",
            ModelVariant::Ap => "ap",
            ModelVariant::ApNoInteract => "ap_no_interact",
            ModelVariant::Baseline => "baseline",
        }
    }

    /// Stable numeric id used in checkpoints.
    pub fn id(self) -> u32 {
        Self::ALL.iter().position(|&v| v == self).expect("listed") as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn is_gn(self) -> bool {
        matches!(
            self,
            ModelVariant::GnPosVel
                | ModelVariant::GnSegm
                | ModelVariant::GnSegmNoRgbd
                | ModelVariant::GnNoEdges
        )
    }

    pub fn is_ap(self) -> bool {
        matches!(self, ModelVariant::Ap | ModelVariant::ApNoInteract)
    }

    /// Nodes carry position and velocity.
    pub fn has_pose(self) -> bool {
        matches!(self, ModelVariant::GnPosVel | ModelVariant::GnNoEdges)
    }

    pub fn has_pose_edges(self) -> bool {
        self == ModelVariant::GnPosVel
    }

    pub fn has_segm_edges(self) -> bool {
        matches!(self, ModelVariant::GnSegm | ModelVariant::GnSegmNoRgbd)
    }

    pub fn has_edges(self) -> bool {
        self.has_pose_edges() || self.has_segm_edges()
    }

    /// Input channels per object: RGB, mask, depth; mask only without RGB-D.
    pub fn channels(self) -> usize {
        if self == ModelVariant::GnSegmNoRgbd {
            1
        } else {
            5
        }
    }

    /// Index of the object-mask channel in the stacked input.
    pub fn mask_channel(self) -> usize {
        if self == ModelVariant::GnSegmNoRgbd {
            0
        } else {
            3
        }
    }

    /// Whether multi-step rollouts re-encode the predicted masks by default
    /// (the baseline has no latent transition to carry state).
    pub fn reencodes_by_default(self) -> bool {
        self == ModelVariant::Baseline
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}
