//! Declarative layer specs and sequential networks built from them.
//!
//! Specs use the notation of network tables: `conv3x3-1-128` is a 3x3
//! convolution with stride 1 and 128 feature maps, `transpconv4x4-[1x2]-256`
//! a transposed convolution with stride 1 along x and 2 along y, `FC-32` a
//! dense layer with 32 units, `maxpool` a 2x2 stride-2 max pool. Kernel and
//! stride pairs are written x-first (`AxB` = width A, height B).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ctx::{Ctx, Mode};
use super::kernels::ConvGeom;
use super::params::{ParamId, ParamStore};
use super::tape::Var;
use super::{Tensor, BN_MOMENTUM};
use crate::error::{Error, Result};

/// A pair of extents along the row (`h`, y) and column (`w`, x) axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hw {
    pub h: usize,
    pub w: usize,
}

impl Hw {
    pub const fn sq(v: usize) -> Self {
        Hw { h: v, w: v }
    }

    pub const fn new(h: usize, w: usize) -> Self {
        Hw { h, w }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv {
        kernel: Hw,
        stride: Hw,
        pad: Hw,
        maps: usize,
    },
    TranspConv {
        kernel: Hw,
        stride: Hw,
        pad: Hw,
        maps: usize,
    },
    MaxPool,
    BatchNorm,
    Activation {
        act: Activation,
    },
    Flatten,
    Reshape {
        shape: Vec<usize>,
    },
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn conv(k: usize, s: usize, p: usize, maps: usize) -> Self {
        LayerSpec::Conv {
            kernel: Hw::sq(k),
            stride: Hw::sq(s),
            pad: Hw::sq(p),
            maps,
        }
    }

    pub fn transp(k: usize, s: usize, p: usize, maps: usize) -> Self {
        LayerSpec::TranspConv {
            kernel: Hw::sq(k),
            stride: Hw::sq(s),
            pad: Hw::sq(p),
            maps,
        }
    }

    pub const fn relu() -> Self {
        LayerSpec::Activation {
            act: Activation::Relu,
        }
    }

    pub const fn sigmoid() -> Self {
        LayerSpec::Activation {
            act: Activation::Sigmoid,
        }
    }

    /// Parses the table notation (`conv3x3-1-128`, `transpconv4x4-[1x2]-256`,
    /// `FC-32`, `maxpool`). Padding defaults to zero; see [`LayerSpec::with_pad`].
    pub fn parse(s: &str) -> Result<Self> {
        let err = |msg: &str| Error::LayerSpec {
            spec: s.to_string(),
            msg: msg.to_string(),
        };
        let t = s.trim();
        if t.eq_ignore_ascii_case("maxpool") {
            return Ok(LayerSpec::MaxPool);
        }
        if t.eq_ignore_ascii_case("batchnorm") {
            return Ok(LayerSpec::BatchNorm);
        }
        if let Some(units) = t.strip_prefix("FC-").or_else(|| t.strip_prefix("fc-")) {
            let units = units
                .parse()
                .map_err(|_| err("unit count is not an integer"))?;
            let spec = LayerSpec::Dense { units };
            spec.validate()?;
            return Ok(spec);
        }
        let (transposed, rest) = if let Some(r) = t.strip_prefix("transpconv") {
            (true, r)
        } else if let Some(r) = t.strip_prefix("conv") {
            (false, r)
        } else {
            return Err(err("unknown layer kind"));
        };
        let mut parts = rest.splitn(3, '-');
        let kernel = parse_pair(parts.next().ok_or_else(|| err("missing kernel"))?)
            .ok_or_else(|| err("bad kernel"))?;
        let stride_txt = parts.next().ok_or_else(|| err("missing stride"))?;
        let stride_txt = stride_txt.trim_start_matches('[').trim_end_matches(']');
        let stride = parse_pair(stride_txt).ok_or_else(|| err("bad stride"))?;
        let maps = parts
            .next()
            .ok_or_else(|| err("missing feature maps"))?
            .parse()
            .map_err(|_| err("feature map count is not an integer"))?;
        let spec = if transposed {
            LayerSpec::TranspConv {
                kernel,
                stride,
                pad: Hw::sq(0),
                maps,
            }
        } else {
            LayerSpec::Conv {
                kernel,
                stride,
                pad: Hw::sq(0),
                maps,
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same spec with explicit zero padding (convolutions only).
    pub fn with_pad(self, pad: Hw) -> Self {
        match self {
            LayerSpec::Conv {
                kernel,
                stride,
                maps,
                ..
            } => LayerSpec::Conv {
                kernel,
                stride,
                pad,
                maps,
            },
            LayerSpec::TranspConv {
                kernel,
                stride,
                maps,
                ..
            } => LayerSpec::TranspConv {
                kernel,
                stride,
                pad,
                maps,
            },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::LayerSpec {
                spec: self.to_string(),
                msg: msg.to_string(),
            })
        };
        match self {
            LayerSpec::Dense { units } if *units == 0 => bad("unit count must be >= 1"),
            LayerSpec::Conv {
                kernel,
                stride,
                maps,
                ..
            }
            | LayerSpec::TranspConv {
                kernel,
                stride,
                maps,
                ..
            } => {
                if kernel.h == 0 || kernel.w == 0 {
                    bad("kernel extents must be >= 1")
                } else if stride.h == 0 || stride.w == 0 {
                    bad("stride components must be >= 1")
                } else if *maps == 0 {
                    bad("feature map count must be >= 1")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn geom(kernel: Hw, stride: Hw, pad: Hw) -> ConvGeom {
        ConvGeom {
            kh: kernel.h,
            kw: kernel.w,
            sh: stride.h,
            sw: stride.w,
            ph: pad.h,
            pw: pad.w,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let mismatch = |msg: String| Error::LayerSpec {
            spec: self.to_string(),
            msg,
        };
        match self {
            LayerSpec::Dense { units } => match input {
                [_] => Ok(vec![*units]),
                _ => Err(mismatch(format!(
                    "dense layer needs a flat input, got {input:?}"
                ))),
            },
            LayerSpec::Conv {
                kernel,
                stride,
                pad,
                maps,
            } => {
                let [_, h, w] = *input else {
                    return Err(mismatch(format!("conv needs [c, h, w], got {input:?}")));
                };
                let (oh, ow) = Self::geom(*kernel, *stride, *pad)
                    .conv_out(h, w)
                    .ok_or_else(|| {
                        mismatch(format!("nonpositive output extent for input {input:?}"))
                    })?;
                Ok(vec![*maps, oh, ow])
            }
            LayerSpec::TranspConv {
                kernel,
                stride,
                pad,
                maps,
            } => {
                let [_, h, w] = *input else {
                    return Err(mismatch(format!(
                        "transpconv needs [c, h, w], got {input:?}"
                    )));
                };
                let (oh, ow) = Self::geom(*kernel, *stride, *pad)
                    .transp_out(h, w)
                    .ok_or_else(|| {
                        mismatch(format!("nonpositive output extent for input {input:?}"))
                    })?;
                Ok(vec![*maps, oh, ow])
            }
            LayerSpec::MaxPool => {
                let [c, h, w] = *input else {
                    return Err(mismatch(format!("maxpool needs [c, h, w], got {input:?}")));
                };
                Ok(vec![c, h.div_ceil(2), w.div_ceil(2)])
            }
            LayerSpec::BatchNorm | LayerSpec::Activation { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(mismatch(format!("cannot reshape {input:?} to {shape:?}")));
                }
                Ok(shape.clone())
            }
        }
    }
}

fn parse_pair(s: &str) -> Option<Hw> {
    match s.split_once('x') {
        // x-first: AxB is width A, height B
        Some((x, y)) => Some(Hw {
            w: x.parse().ok()?,
            h: y.parse().ok()?,
        }),
        None => {
            let v = s.parse().ok()?;
            Some(Hw::sq(v))
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pair = |p: &Hw| {
            if p.h == p.w {
                format!("{}", p.w)
            } else {
                format!("[{}x{}]", p.w, p.h)
            }
        };
        match self {
            LayerSpec::Dense { units } => write!(f, "FC-{units}"),
            LayerSpec::Conv {
                kernel,
                stride,
                maps,
                ..
            } => {
                write!(f, "conv{}x{}-{}-{}", kernel.w, kernel.h, pair(stride), maps)
            }
            LayerSpec::TranspConv {
                kernel,
                stride,
                maps,
                ..
            } => {
                write!(
                    f,
                    "transpconv{}x{}-{}-{}",
                    kernel.w,
                    kernel.h,
                    pair(stride),
                    maps
                )
            }
            LayerSpec::MaxPool => write!(f, "maxpool"),
            LayerSpec::BatchNorm => write!(f, "batchnorm"),
            LayerSpec::Activation { act } => write!(f, "{act:?}"),
            LayerSpec::Flatten => write!(f, "flatten"),
            LayerSpec::Reshape { shape } => write!(f, "reshape{shape:?}"),
        }
    }
}

/// Per-sample shapes after every layer, starting with `input`.
pub fn infer_shapes(specs: &[LayerSpec], input: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![input.to_vec()];
    for s in specs {
        let next = s.output_shape(shapes.last().expect("nonempty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense {
        w: ParamId,
        b: ParamId,
    },
    Conv {
        w: ParamId,
        b: ParamId,
        geom: ConvGeom,
    },
    TranspConv {
        w: ParamId,
        b: ParamId,
        geom: ConvGeom,
    },
    MaxPool,
    BatchNorm {
        gamma: ParamId,
        beta: ParamId,
        mean: ParamId,
        var: ParamId,
    },
    Act(Activation),
    Reshape(Vec<usize>),
}

/// A chain of layers with parameters registered in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Sequential {
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

impl Sequential {
    /// Shape-checks `specs` against `input` end to end, then registers
    /// parameters named `{prefix}.{index}.{w,b,gamma,...}` with He-normal
    /// weights and zero biases.
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        specs: &[LayerSpec],
        input: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shapes = infer_shapes(specs, input)?;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (spec, in_shape)) in specs.iter().zip(&shapes).enumerate() {
            let name = |p: &str| format!("{prefix}.{i}.{p}");
            let layer = match spec {
                LayerSpec::Dense { units } => {
                    let fan_in = in_shape[0];
                    let w = store.add(name("w"), he(&[fan_in, *units], fan_in, rng), true)?;
                    let b = store.add(name("b"), Tensor::zeros(&[*units]), true)?;
                    Layer::Dense { w, b }
                }
                LayerSpec::Conv {
                    kernel,
                    stride,
                    pad,
                    maps,
                } => {
                    let c = in_shape[0];
                    let fan_in = c * kernel.h * kernel.w;
                    let w = store.add(
                        name("w"),
                        he(&[*maps, c, kernel.h, kernel.w], fan_in, rng),
                        true,
                    )?;
                    let b = store.add(name("b"), Tensor::zeros(&[*maps]), true)?;
                    Layer::Conv {
                        w,
                        b,
                        geom: LayerSpec::geom(*kernel, *stride, *pad),
                    }
                }
                LayerSpec::TranspConv {
                    kernel,
                    stride,
                    pad,
                    maps,
                } => {
                    let c = in_shape[0];
                    let fan_in = (c * kernel.h * kernel.w / (stride.h * stride.w)).max(1);
                    let w = store.add(
                        name("w"),
                        he(&[c, *maps, kernel.h, kernel.w], fan_in, rng),
                        true,
                    )?;
                    let b = store.add(name("b"), Tensor::zeros(&[*maps]), true)?;
                    Layer::TranspConv {
                        w,
                        b,
                        geom: LayerSpec::geom(*kernel, *stride, *pad),
                    }
                }
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::BatchNorm => {
                    let f = in_shape[0];
                    Layer::BatchNorm {
                        gamma: store.add(name("gamma"), Tensor::ones(&[f]), true)?,
                        beta: store.add(name("beta"), Tensor::zeros(&[f]), true)?,
                        mean: store.add(name("running_mean"), Tensor::zeros(&[f]), false)?,
                        var: store.add(name("running_var"), Tensor::ones(&[f]), false)?,
                    }
                }
                LayerSpec::Activation { act } => Layer::Act(*act),
                LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
                    Layer::Reshape(shapes[i + 1].clone())
                }
            };
            layers.push(layer);
        }
        Ok(Sequential { layers, shapes })
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn out_shape(&self) -> &[usize] {
        self.shapes.last().expect("nonempty")
    }

    /// Flat output width.
    pub fn out_width(&self) -> usize {
        self.out_shape().iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Per-sample shapes after every layer, starting with the input.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Runs the network on `x` of shape `[batch, ..in_shape]`.
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let xs = ctx.tape.shape(x);
        if xs.len() != self.in_shape().len() + 1 || xs[1..] != *self.in_shape() {
            return Err(Error::shape(
                "sequential input",
                &xs[1.min(xs.len())..],
                self.in_shape(),
            ));
        }
        let batch = xs[0];
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Dense { w, b } => {
                    let (w, b) = (ctx.param(*w), ctx.param(*b));
                    ctx.tape.dense(h, w, b)?
                }
                Layer::Conv { w, b, geom } => {
                    let (w, b) = (ctx.param(*w), ctx.param(*b));
                    let y = ctx.tape.conv2d(h, w, *geom)?;
                    ctx.tape.add_bias(y, b)?
                }
                Layer::TranspConv { w, b, geom } => {
                    let (w, b) = (ctx.param(*w), ctx.param(*b));
                    let y = ctx.tape.transp_conv2d(h, w, *geom)?;
                    ctx.tape.add_bias(y, b)?
                }
                Layer::MaxPool => ctx.tape.maxpool2(h)?,
                Layer::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                } => batch_norm(ctx, h, *gamma, *beta, *mean, *var)?,
                Layer::Act(Activation::Relu) => ctx.tape.relu(h),
                Layer::Act(Activation::Sigmoid) => ctx.tape.sigmoid(h),
                Layer::Act(Activation::Linear) => h,
                Layer::Reshape(shape) => {
                    let mut full = vec![batch];
                    full.extend_from_slice(shape);
                    ctx.tape.reshape(h, &full)?
                }
            };
        }
        Ok(h)
    }

    /// Zeroes the weights and bias of the last dense or convolutional layer.
    pub fn zero_last(&self, store: &mut ParamStore) {
        let last = self.layers.iter().rev().find_map(|l| match l {
            Layer::Dense { w, b } | Layer::Conv { w, b, .. } | Layer::TranspConv { w, b, .. } => {
                Some((*w, *b))
            }
            _ => None,
        });
        if let Some((w, b)) = last {
            store.value_mut(w).data_mut().fill(0.0);
            store.value_mut(b).data_mut().fill(0.0);
        }
    }

    /// Parameter ids owned by this network, in layer order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Dense { w, b }
                | Layer::Conv { w, b, .. }
                | Layer::TranspConv { w, b, .. } => vec![*w, *b],
                Layer::BatchNorm {
                    gamma,
                    beta,
                    mean,
                    var,
                } => vec![*gamma, *beta, *mean, *var],
                _ => vec![],
            })
            .collect()
    }
}

fn batch_norm(
    ctx: &mut Ctx,
    x: Var,
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
) -> Result<Var> {
    let (g, b) = (ctx.param(gamma), ctx.param(beta));
    match ctx.mode() {
        Mode::Train => {
            let (y, bm, bv) = ctx.tape.batch_norm_train(x, g, b)?;
            let store = ctx.store_mut()?;
            for (r, v) in store.value_mut(mean).data_mut().iter_mut().zip(&bm) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
            }
            for (r, v) in store.value_mut(var).data_mut().iter_mut().zip(&bv) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
            }
            Ok(y)
        }
        Mode::Eval => {
            let store = ctx.store();
            let m = store.value(mean).data().to_vec();
            let v = store.value(var).data().to_vec();
            ctx.tape.batch_norm_eval(x, g, b, &m, &v)
        }
    }
}

fn he(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::randn(shape, (2.0 / fan_in.max(1) as f64).sqrt(), rng)
}

/// Hidden dense layers each followed by ReLU then batch norm, and a final
/// linear dense layer of width `out`.
pub fn mlp_specs(hidden: &[usize], out: usize) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() * 3 + 1);
    for &h in hidden {
        specs.extend([LayerSpec::dense(h), LayerSpec::relu(), LayerSpec::BatchNorm]);
    }
    specs.push(LayerSpec::dense(out));
    specs
}
