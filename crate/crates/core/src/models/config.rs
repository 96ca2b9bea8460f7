use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelVariant;
use crate::error::{Error, Result};
use crate::tensor::{infer_shapes, mlp_specs, Hw, LayerSpec};

/// Network size preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Narrow networks for small frames on a single CPU core.
    Desk,
    /// The published layer tables at 160x120.
    Paper,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected desk or paper)"
            ))),
        }
    }
}

/// Hidden widths of an MLP; the output width is fixed by where it sits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Vec<usize>,
}

impl Mlp {
    pub fn new(hidden: &[usize]) -> Self {
        Mlp {
            hidden: hidden.to_vec(),
        }
    }

    pub fn specs(&self, out: usize) -> Vec<LayerSpec> {
        mlp_specs(&self.hidden, out)
    }
}

/// How the squared-difference terms of the loss reduce over vector components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub reduction: Reduction,
    /// Weight of the latent loss for the auto-predictor variants.
    pub latent_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            reduction: Reduction::Mean,
            latent_weight: 1.0,
        }
    }
}

/// Layer specs of every network a predictor may use. Which ones are built
/// depends on the variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpecs {
    /// Object CNN over the stacked channels; must end flat.
    pub node_encoder: Vec<LayerSpec>,
    /// Transposed CNN from a flat latent to one `[1, h, w]` logit map.
    pub node_decoder: Vec<LayerSpec>,
    pub control_encoder: Mlp,
    pub control_width: usize,
    pub pose_encoder: Mlp,
    pub pose_width: usize,
    pub pose_decoder: Mlp,
    pub edge_encoder: Mlp,
    pub edge_width: usize,
    pub edge_decoder: Mlp,
    /// Edge mask size of the segmentation-edge variants.
    pub edge_mask: Hw,
    pub edge_cnn_encoder: Vec<LayerSpec>,
    pub edge_cnn_decoder: Vec<LayerSpec>,
    pub core_node: Mlp,
    pub core_edge: Mlp,
    pub core_global: Mlp,
    pub f_trans: Mlp,
    pub f_interact: Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub preset: Preset,
    pub width: usize,
    pub height: usize,
    pub nets: NetSpecs,
    pub loss: LossConfig,
}

fn hidden(spec: LayerSpec) -> [LayerSpec; 3] {
    [spec, LayerSpec::relu(), LayerSpec::BatchNorm]
}

fn parsed(s: &str, pad: Hw) -> LayerSpec {
    LayerSpec::parse(s)
        .expect("preset layer spec")
        .with_pad(pad)
}

/// Conv stack with ReLU + batch norm after every layer but the last.
fn stack(layers: Vec<LayerSpec>, pools_after: &[usize]) -> Vec<LayerSpec> {
    let n = layers.len();
    let mut out = Vec::new();
    for (i, l) in layers.into_iter().enumerate() {
        if i + 1 < n {
            out.extend(hidden(l));
        } else {
            out.push(l);
        }
        if pools_after.contains(&i) {
            out.push(LayerSpec::MaxPool);
        }
    }
    out
}

impl ModelConfig {
    /// Small networks for `width x height` frames (both divisible by 8).
    pub fn desk(variant: ModelVariant, width: usize, height: usize) -> Result<Self> {
        if width % 8 != 0 || height % 8 != 0 || width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "desk preset needs frame sides divisible by 8, got {width}x{height}"
            )));
        }
        let (lh, lw) = (height / 8, width / 8);
        let latent = 32 * lh * lw;
        let mut node_encoder = stack(
            vec![
                LayerSpec::conv(3, 1, 1, 16),
                LayerSpec::conv(3, 1, 1, 32),
                LayerSpec::conv(3, 1, 1, 32),
            ],
            &[0, 1, 2],
        );
        node_encoder.push(LayerSpec::Flatten);
        let mut node_decoder = hidden(LayerSpec::dense(latent)).to_vec();
        node_decoder.push(LayerSpec::Reshape {
            shape: vec![32, lh, lw],
        });
        node_decoder.extend(stack(
            vec![
                LayerSpec::transp(2, 2, 0, 32),
                LayerSpec::transp(2, 2, 0, 16),
                LayerSpec::transp(2, 2, 0, 16),
                LayerSpec::conv(3, 1, 1, 1),
            ],
            &[],
        ));

        let edge_mask = Hw::new(height / 4, width / 4);
        let mut edge_cnn_encoder = stack(
            vec![LayerSpec::conv(3, 1, 1, 8), LayerSpec::conv(3, 1, 1, 4)],
            &[0],
        );
        edge_cnn_encoder.push(LayerSpec::Flatten);
        let mut edge_cnn_decoder = vec![LayerSpec::Reshape {
            shape: vec![4, edge_mask.h.div_ceil(2), edge_mask.w.div_ceil(2)],
        }];
        edge_cnn_decoder.extend(stack(
            vec![LayerSpec::transp(2, 2, 0, 8), LayerSpec::conv(3, 1, 1, 1)],
            &[],
        ));

        let cfg = ModelConfig {
            variant,
            preset: Preset::Desk,
            width,
            height,
            nets: NetSpecs {
                node_encoder,
                node_decoder,
                control_encoder: Mlp::new(&[32]),
                control_width: 32,
                pose_encoder: Mlp::new(&[32]),
                pose_width: 32,
                pose_decoder: Mlp::new(&[32, 32]),
                edge_encoder: Mlp::new(&[32, 32]),
                edge_width: 32,
                edge_decoder: Mlp::new(&[32, 32]),
                edge_mask,
                edge_cnn_encoder,
                edge_cnn_decoder,
                core_node: Mlp::new(&[128, 128]),
                core_edge: Mlp::new(&[32, 32]),
                core_global: Mlp::new(&[16, 16]),
                f_trans: Mlp::new(&[128, 128]),
                f_interact: Mlp::new(&[128, 128]),
            },
            loss: LossConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The published network tables for 160x120 frames.
    ///
    /// The layer sequences, kernels, strides and widths follow the tables.
    /// Paddings are chosen so the decoders land exactly on the frame and
    /// edge-mask sizes, which forces one change: the final node-decoder layer
    /// is `transpconv2x2-1-1` (no 3x3 stride-1 layer after a 3x3 stride-2
    /// layer can produce an even extent). Both decoders emit one logit map.
    pub fn paper(variant: ModelVariant) -> Result<Self> {
        let (width, height) = (160, 120);
        let p1 = Hw::sq(1);
        let enc_layers: Vec<LayerSpec> = [
            "conv3x3-1-128",
            "conv3x3-1-128",
            "conv3x3-1-256",
            "conv3x3-1-256",
            "conv3x3-1-256",
            "conv3x3-1-256",
            "conv3x3-1-256",
            "conv3x3-1-256",
            "conv3x3-2-256",
            "conv3x3-2-256",
        ]
        .iter()
        .map(|s| parsed(s, p1))
        .collect();
        let mut node_encoder = stack(enc_layers, &[1, 3, 5, 7, 9]);
        node_encoder.push(LayerSpec::Flatten);
        let latent = 256 * 2;

        let dec: [(&str, usize, usize); 12] = [
            ("transpconv2x2-1-256", 0, 0),
            ("transpconv2x2-2-256", 1, 0),
            ("transpconv4x4-[1x2]-256", 0, 0),
            ("transpconv3x2-2-256", 0, 0),
            ("transpconv2x2-1-256", 0, 0),
            ("transpconv2x2-1-128", 0, 1),
            ("transpconv2x2-2-128", 0, 0),
            ("transpconv3x3-1-128", 1, 1),
            ("transpconv3x3-2-128", 0, 0),
            ("transpconv3x3-1-128", 0, 0),
            ("transpconv3x3-2-128", 0, 0),
            ("transpconv2x2-1-1", 0, 0),
        ];
        let mut node_decoder = hidden(LayerSpec::dense(latent)).to_vec();
        node_decoder.push(LayerSpec::Reshape {
            shape: vec![256, 1, 2],
        });
        node_decoder.extend(stack(
            dec.iter()
                .map(|&(s, ph, pw)| parsed(s, Hw::new(ph, pw)))
                .collect(),
            &[],
        ));

        let edge_mask = Hw::new(44, 59);
        let mut edge_cnn_encoder = stack(
            [
                "conv3x3-2-32",
                "conv3x3-2-32",
                "conv3x3-2-16",
                "conv3x3-2-5",
            ]
            .iter()
            .map(|s| parsed(s, Hw::sq(0)))
            .collect(),
            &[],
        );
        edge_cnn_encoder.push(LayerSpec::Flatten);
        let edge_dec: [(&str, usize, usize); 7] = [
            ("transpconv2x2-1-64", 0, 1),
            ("transpconv2x2-2-64", 1, 0),
            ("transpconv4x4-[1x2]-32", 1, 1),
            ("transpconv3x2-2-16", 1, 0),
            ("transpconv2x2-2-8", 0, 0),
            ("transpconv3x2-2-2", 1, 0),
            ("transpconv3x2-2-1", 0, 0),
        ];
        let mut edge_cnn_decoder = vec![LayerSpec::Reshape {
            shape: vec![5, 1, 2],
        }];
        edge_cnn_decoder.extend(stack(
            edge_dec
                .iter()
                .map(|&(s, ph, pw)| parsed(s, Hw::new(ph, pw)))
                .collect(),
            &[],
        ));

        let cfg = ModelConfig {
            variant,
            preset: Preset::Paper,
            width,
            height,
            nets: NetSpecs {
                node_encoder,
                node_decoder,
                control_encoder: Mlp::new(&[32, 32]),
                control_width: 32,
                pose_encoder: Mlp::new(&[32]),
                pose_width: 32,
                pose_decoder: Mlp::new(&[32, 32]),
                edge_encoder: Mlp::new(&[64, 64]),
                edge_width: 64,
                edge_decoder: Mlp::new(&[64, 64]),
                edge_mask,
                edge_cnn_encoder,
                edge_cnn_decoder,
                core_node: Mlp::new(&[256, 256]),
                core_edge: Mlp::new(&[64, 64]),
                core_global: Mlp::new(&[32, 32]),
                f_trans: Mlp::new(&[256, 256]),
                f_interact: Mlp::new(&[256, 256]),
            },
            loss: LossConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_preset(
        preset: Preset,
        variant: ModelVariant,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        match preset {
            Preset::Desk => Self::desk(variant, width, height),
            Preset::Paper if (width, height) == (160, 120) => Self::paper(variant),
            Preset::Paper => Err(Error::Config(format!(
                "paper preset is defined for 160x120 frames, got {width}x{height}"
            ))),
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Per-object input shape `[channels, h, w]`.
    pub fn visual_shape(&self) -> [usize; 3] {
        [self.variant.channels(), self.height, self.width]
    }

    /// Width of the CNN latent of one object.
    pub fn latent_width(&self) -> Result<usize> {
        let shapes = infer_shapes(&self.nets.node_encoder, &self.visual_shape())?;
        match shapes.last().map(Vec::as_slice) {
            Some([w]) => Ok(*w),
            other => Err(Error::Config(format!(
                "node encoder must end flat, ends in {other:?}"
            ))),
        }
    }

    /// Width of the edge CNN latent (segmentation-edge variants).
    pub fn edge_cnn_width(&self) -> Result<usize> {
        let m = self.nets.edge_mask;
        let shapes = infer_shapes(&self.nets.edge_cnn_encoder, &[1, m.h, m.w])?;
        match shapes.last().map(Vec::as_slice) {
            Some([w]) => Ok(*w),
            other => Err(Error::Config(format!(
                "edge encoder CNN must end flat, ends in {other:?}"
            ))),
        }
    }

    /// Shape-checks every network the variant uses.
    pub fn validate(&self) -> Result<()> {
        let latent = self.latent_width()?;
        let dec_in = match self.variant {
            v if v.is_gn() => {
                latent
                    + if v.has_pose() {
                        self.nets.pose_width
                    } else {
                        0
                    }
            }
            _ => latent + self.nets.control_width,
        };
        let out = infer_shapes(&self.nets.node_decoder, &[dec_in])?;
        if out.last().map(Vec::as_slice) != Some(&[1, self.height, self.width][..]) {
            return Err(Error::Config(format!(
                "node decoder produces {:?}, frames are 1x{}x{}",
                out.last(),
                self.height,
                self.width
            )));
        }
        if self.variant.has_segm_edges() {
            let ew = self.edge_cnn_width()?;
            let m = self.nets.edge_mask;
            let out = infer_shapes(&self.nets.edge_cnn_decoder, &[ew])?;
            if out.last().map(Vec::as_slice) != Some(&[1, m.h, m.w][..]) {
                return Err(Error::Config(format!(
                    "edge decoder produces {:?}, edge masks are 1x{}x{}",
                    out.last(),
                    m.h,
                    m.w
                )));
            }
        }
        if !(self.loss.latent_weight >= 0.0) {
            return Err(Error::Config(format!(
                "latent loss weight {} must be >= 0",
                self.loss.latent_weight
            )));
        }
        Ok(())
    }
}
