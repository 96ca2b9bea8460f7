use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelVariant};
use crate::error::{Error, Result};
use crate::graphnet::{
    encode_process_decode, AttributedGraph, EdgeAttr, EpdFunctions, FnBlock, GraphFn, Topology,
};
use crate::tensor::{Ctx, ParamStore, Sequential, Tensor, Var};

/// Predictions for one step of a batch of graphs. Rows follow the batched
/// node (and edge) order of the input graphs.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `[nodes, h * w]`, values in `[0, 1]`.
    pub masks: Var,
    /// `[nodes, 6]`, position then velocity.
    pub poses: Option<Var>,
    /// `[edges, 9]` pose edges or `[edges, eh * ew]` edge masks in `[0, 1]`.
    pub edges: Option<Var>,
    /// `[nodes, latent]` predicted object latents (auto-predictor only).
    pub latent: Option<Var>,
}

struct Core {
    edge: Sequential,
    node: Sequential,
    global: Sequential,
}

/// The network architecture of one variant; parameters live in a separate
/// [`ParamStore`].
pub struct Model {
    pub config: ModelConfig,
    latent: usize,
    node_encoder: Sequential,
    node_decoder: Sequential,
    control_encoder: Sequential,
    pose_encoder: Option<Sequential>,
    pose_decoder: Option<Sequential>,
    edge_encoder: Option<Sequential>,
    edge_decoder: Option<Sequential>,
    core: Option<Core>,
    f_trans: Option<Sequential>,
    f_interact: Option<Sequential>,
}

impl Model {
    /// Registers all parameters of `config.variant` in `store`.
    pub fn build(
        config: ModelConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let v = config.variant;
        let n = &config.nets;
        let latent = config.latent_width()?;
        let cw = n.control_width;
        let node_encoder = Sequential::build(
            store,
            "node_encoder",
            &n.node_encoder,
            &config.visual_shape(),
            rng,
        )?;
        let control_encoder = Sequential::build(
            store,
            "control_encoder",
            &n.control_encoder.specs(cw),
            &[6],
            rng,
        )?;
        let (pose_encoder, pose_decoder) = if v.has_pose() {
            let pw = latent + n.pose_width;
            (
                Some(Sequential::build(
                    store,
                    "pose_encoder",
                    &n.pose_encoder.specs(n.pose_width),
                    &[6],
                    rng,
                )?),
                Some(Sequential::build(
                    store,
                    "pose_decoder",
                    &n.pose_decoder.specs(6),
                    &[pw],
                    rng,
                )?),
            )
        } else {
            (None, None)
        };
        let node_width = latent + if v.has_pose() { n.pose_width } else { 0 };
        let (edge_encoder, edge_decoder, edge_width) = if v.has_pose_edges() {
            let ew = n.edge_width;
            (
                Some(Sequential::build(
                    store,
                    "edge_encoder",
                    &n.edge_encoder.specs(ew),
                    &[9],
                    rng,
                )?),
                Some(Sequential::build(
                    store,
                    "edge_decoder",
                    &n.edge_decoder.specs(9),
                    &[ew],
                    rng,
                )?),
                ew,
            )
        } else if v.has_segm_edges() {
            let ew = config.edge_cnn_width()?;
            let m = n.edge_mask;
            (
                Some(Sequential::build(
                    store,
                    "edge_encoder",
                    &n.edge_cnn_encoder,
                    &[1, m.h, m.w],
                    rng,
                )?),
                Some(Sequential::build(
                    store,
                    "edge_decoder",
                    &n.edge_cnn_decoder,
                    &[ew],
                    rng,
                )?),
                ew,
            )
        } else {
            (None, None, NO_EDGE_WIDTH)
        };
        let dec_in = if v.is_gn() { node_width } else { latent + cw };
        let node_decoder =
            Sequential::build(store, "node_decoder", &n.node_decoder, &[dec_in], rng)?;
        let core = if v.is_gn() {
            Some(Core {
                edge: Sequential::build(
                    store,
                    "core_edge",
                    &n.core_edge.specs(edge_width),
                    &[2 * edge_width + 4 * node_width + cw],
                    rng,
                )?,
                node: Sequential::build(
                    store,
                    "core_node",
                    &n.core_node.specs(node_width),
                    &[edge_width + 2 * node_width + cw],
                    rng,
                )?,
                global: Sequential::build(
                    store,
                    "core_global",
                    &n.core_global.specs(cw),
                    &[edge_width + node_width + cw],
                    rng,
                )?,
            })
        } else {
            None
        };
        let (f_trans, f_interact) = if v.is_ap() {
            let ft = Sequential::build(
                store,
                "f_trans",
                &n.f_trans.specs(latent),
                &[latent + cw],
                rng,
            )?;
            ft.zero_last(store);
            let fi = if v == ModelVariant::Ap {
                let fi = Sequential::build(
                    store,
                    "f_interact",
                    &n.f_interact.specs(latent),
                    &[2 * (latent + cw)],
                    rng,
                )?;
                fi.zero_last(store);
                Some(fi)
            } else {
                None
            };
            (Some(ft), fi)
        } else {
            (None, None)
        };
        Ok(Model {
            config,
            latent,
            node_encoder,
            node_decoder,
            control_encoder,
            pose_encoder,
            pose_decoder,
            edge_encoder,
            edge_decoder,
            core,
            f_trans,
            f_interact,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn latent_width(&self) -> usize {
        self.latent
    }

    pub fn node_encoder(&self) -> &Sequential {
        &self.node_encoder
    }

    /// Checks that `g` carries exactly the attributes this variant consumes.
    pub fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        let v = self.variant();
        let bad = |m: String| Err(Error::Schema(format!("{v}: {m}")));
        if g.nodes.is_empty() {
            return bad("graph has no nodes".into());
        }
        let want = self.config.visual_shape();
        for node in &g.nodes {
            match &node.visual {
                Some(t) if t.shape() == want => {}
                Some(t) => {
                    return bad(format!(
                        "node visual shape {:?}, expected {want:?}",
                        t.shape()
                    ))
                }
                None => return bad("node has no visual input".into()),
            }
            if node.pose.is_some() != v.has_pose() {
                return bad(format!(
                    "node pose {} but variant expects {}",
                    presence(node.pose.is_some()),
                    presence(v.has_pose())
                ));
            }
            if node.latent.is_some() {
                return bad("input nodes must not carry latents".into());
            }
        }
        if v.is_gn() {
            let m = self.config.nets.edge_mask;
            for e in &g.edges {
                let ok = match &e.attr {
                    EdgeAttr::Pose(_) => v.has_pose_edges(),
                    EdgeAttr::Segm(t) => v.has_segm_edges() && t.shape() == [1, m.h, m.w],
                    EdgeAttr::Absent => false,
                };
                if !ok {
                    return bad(format!(
                        "edge attribute {:?} does not match the variant",
                        edge_kind(&e.attr)
                    ));
                }
            }
            if !v.has_edges() && !g.edges.is_empty() {
                return bad(format!(
                    "{} edges given to an edgeless variant",
                    g.edges.len()
                ));
            }
        }
        Ok(())
    }

    /// Runs `controls.len()` prediction steps on a batch of graphs. Each
    /// control tensor is `[graphs, 6]`. With `reencode`, visual variants feed
    /// the predicted masks back through the encoder instead of carrying the
    /// latent forward.
    pub fn forward(
        &self,
        ctx: &mut Ctx,
        graphs: &[AttributedGraph],
        controls: &[Tensor],
        reencode: bool,
    ) -> Result<(Arc<Topology>, Vec<StepOutput>)> {
        if graphs.is_empty() {
            return Err(Error::Schema("empty graph batch".into()));
        }
        if controls.is_empty() {
            return Err(Error::Schema(
                "at least one control step is required".into(),
            ));
        }
        for g in graphs {
            self.check_graph(g)?;
        }
        for c in controls {
            if c.shape() != [graphs.len(), 6] {
                return Err(Error::shape("controls", c.shape(), &[graphs.len(), 6]));
            }
        }
        let controls: Vec<Var> = controls
            .iter()
            .map(|c| ctx.tape.constant(c.clone()))
            .collect();
        if self.variant().is_gn() {
            self.forward_gn(ctx, graphs, &controls)
        } else {
            self.forward_visual(ctx, graphs, &controls, reencode)
        }
    }

    fn visual_len(&self) -> usize {
        self.config.visual_shape().iter().product()
    }

    fn encode_visual(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let rows = ctx.tape.shape(x)[0];
        let [c, h, w] = self.config.visual_shape();
        let img = ctx.tape.reshape(x, &[rows, c, h, w])?;
        self.node_encoder.forward(ctx, img)
    }

    fn decode_mask(&self, ctx: &mut Ctx, z: Var) -> Result<Var> {
        let rows = ctx.tape.shape(z)[0];
        let logits = self.node_decoder.forward(ctx, z)?;
        let flat = ctx.tape.reshape(logits, &[rows, self.config.pixels()])?;
        Ok(ctx.tape.sigmoid(flat))
    }

    fn forward_gn(
        &self,
        ctx: &mut Ctx,
        graphs: &[AttributedGraph],
        controls: &[Var],
    ) -> Result<(Arc<Topology>, Vec<StepOutput>)> {
        let core = self
            .core
            .as_ref()
            .expect("graph-network variant has a core");
        let input = AttributedGraph::batch(&mut ctx.tape, graphs)?;
        let topo = Arc::clone(&input.topo);
        let vis = self.visual_len();
        let px = self.config.pixels();
        let node_width = self.latent
            + self
                .pose_encoder
                .as_ref()
                .map_or(0, |_| self.config.nets.pose_width);

        let encode_node = FnBlock::new(node_width, |ctx: &mut Ctx, x: Var| {
            let v = ctx.tape.slice_cols(x, 0, vis)?;
            let z = self.encode_visual(ctx, v)?;
            match &self.pose_encoder {
                Some(pe) => {
                    let p = ctx.tape.slice_cols(x, vis, 6)?;
                    let zp = pe.forward(ctx, p)?;
                    ctx.tape.concat(&[z, zp])
                }
                None => Ok(z),
            }
        });
        let decode_node = FnBlock::new(
            px + if self.pose_decoder.is_some() { 6 } else { 0 },
            |ctx: &mut Ctx, z: Var| {
                let m = self.decode_mask(ctx, z)?;
                match &self.pose_decoder {
                    Some(pd) => {
                        let p = pd.forward(ctx, z)?;
                        ctx.tape.concat(&[m, p])
                    }
                    None => Ok(m),
                }
            },
        );
        let segm = self.variant().has_segm_edges();
        let edge_mask = self.config.nets.edge_mask;
        let encode_edge = self.edge_encoder.as_ref().map(|enc| {
            FnBlock::new(enc.out_width(), move |ctx: &mut Ctx, e: Var| {
                if segm {
                    let rows = ctx.tape.shape(e)[0];
                    let img = ctx.tape.reshape(e, &[rows, 1, edge_mask.h, edge_mask.w])?;
                    enc.forward(ctx, img)
                } else {
                    enc.forward(ctx, e)
                }
            })
        });
        let decode_edge = self.edge_decoder.as_ref().map(|dec| {
            FnBlock::new(dec.out_width(), move |ctx: &mut Ctx, z: Var| {
                let y = dec.forward(ctx, z)?;
                if segm {
                    let rows = ctx.tape.shape(y)[0];
                    let flat = ctx.tape.reshape(y, &[rows, edge_mask.h * edge_mask.w])?;
                    Ok(ctx.tape.sigmoid(flat))
                } else {
                    Ok(y)
                }
            })
        });
        // Edgeless graphs never call the edge function; its width only sizes
        // the zero aggregate the node function receives.
        let no_edges = FnBlock::new(NO_EDGE_WIDTH, |_: &mut Ctx, _: Var| -> Result<Var> {
            Err(Error::Graph(
                "edge function called on an edgeless variant".into(),
            ))
        });
        let core_edge: &dyn GraphFn = if self.variant().has_edges() {
            &core.edge
        } else {
            &no_edges
        };
        let f = EpdFunctions {
            encode_edge: encode_edge.as_ref().map(|b| b as &dyn GraphFn),
            encode_node: &encode_node,
            encode_control: &self.control_encoder,
            core_edge,
            core_node: &core.node,
            core_global: &core.global,
            decode_edge: decode_edge.as_ref().map(|b| b as &dyn GraphFn),
            decode_node: &decode_node,
        };
        let steps = encode_process_decode(ctx, &input, controls, &f)?;
        let mut out = Vec::with_capacity(steps.len());
        for s in steps {
            let nodes = s.decoded.nodes;
            let masks = ctx.tape.slice_cols(nodes, 0, px)?;
            let poses = match self.pose_decoder {
                Some(_) => Some(ctx.tape.slice_cols(nodes, px, 6)?),
                None => None,
            };
            let edges = if self.variant().has_edges() && topo.n_edges() > 0 {
                s.decoded.edges
            } else {
                None
            };
            out.push(StepOutput {
                masks,
                poses,
                edges,
                latent: None,
            });
        }
        Ok((topo, out))
    }

    fn forward_visual(
        &self,
        ctx: &mut Ctx,
        graphs: &[AttributedGraph],
        controls: &[Var],
        reencode: bool,
    ) -> Result<(Arc<Topology>, Vec<StepOutput>)> {
        let counts: Vec<usize> = graphs.iter().map(|g| g.nodes.len()).collect();
        let topo = Arc::new(Topology::fully_connected(&counts));
        let rows: Vec<Tensor> = graphs
            .iter()
            .flat_map(|g| g.nodes.iter())
            .map(|n| {
                let v = n.visual.as_ref().expect("checked");
                Tensor::new(vec![1, v.len()], v.data().to_vec())
            })
            .collect::<Result<_>>()?;
        let mut x = ctx.tape.constant(Tensor::cat_rows(&rows)?);
        let mut v = self.encode_visual(ctx, x)?;
        let px = self.config.pixels();
        let mask_col = self.variant().mask_channel() * px;
        let vis = self.visual_len();
        let mut out = Vec::with_capacity(controls.len());
        for (k, &c) in controls.iter().enumerate() {
            let c_latent = self.control_encoder.forward(ctx, c)?;
            let cn = ctx.tape.gather_rows(c_latent, &topo.node_graph)?;
            let vbar = ctx.tape.concat(&[v, cn])?;
            let next = match &self.f_trans {
                Some(ft) => {
                    let dv = ft.forward(ctx, vbar)?;
                    let mut next = ctx.tape.add(v, dv)?;
                    if let Some(fi) = &self.f_interact {
                        if topo.n_edges() > 0 {
                            let own = ctx.tape.gather_rows(vbar, &topo.receivers)?;
                            let other = ctx.tape.gather_rows(vbar, &topo.senders)?;
                            let pair = ctx.tape.concat(&[own, other])?;
                            let effect = fi.forward(ctx, pair)?;
                            let total = ctx.tape.scatter_add_rows(
                                effect,
                                &topo.receivers,
                                topo.n_nodes(),
                            )?;
                            next = ctx.tape.add(next, total)?;
                        }
                    }
                    next
                }
                None => v,
            };
            let dec_in = ctx.tape.concat(&[next, cn])?;
            let masks = self.decode_mask(ctx, dec_in)?;
            out.push(StepOutput {
                masks,
                poses: None,
                edges: None,
                latent: self.f_trans.as_ref().map(|_| next),
            });
            if k + 1 == controls.len() {
                break;
            }
            v = if reencode {
                let mut parts = Vec::with_capacity(3);
                if mask_col > 0 {
                    parts.push(ctx.tape.slice_cols(x, 0, mask_col)?);
                }
                parts.push(masks);
                if mask_col + px < vis {
                    parts.push(ctx.tape.slice_cols(x, mask_col + px, vis - mask_col - px)?);
                }
                x = ctx.tape.concat(&parts)?;
                self.encode_visual(ctx, x)?
            } else {
                next
            };
        }
        Ok((topo, out))
    }
}

/// Width of the (always zero) edge aggregate of edgeless graph networks.
const NO_EDGE_WIDTH: usize = 1;

fn presence(b: bool) -> &'static str {
    if b {
        "present"
    } else {
        "absent"
    }
}

fn edge_kind(a: &EdgeAttr) -> String {
    match a {
        EdgeAttr::Pose(_) => "pose".into(),
        EdgeAttr::Segm(t) => format!("mask {:?}", t.shape()),
        EdgeAttr::Absent => "absent".into(),
    }
}

/// A model together with its parameters.
pub struct Predictor {
    pub model: Model,
    pub store: ParamStore,
}

impl Predictor {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::build(config, &mut store, &mut rng)?;
        Ok(Predictor { model, store })
    }

    /// Builds the architecture of `config` and takes every parameter from
    /// `params`, which must match names and shapes exactly.
    pub fn with_params(config: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut p = Self::new(config, 0)?;
        if params.len() != p.store.len() {
            return Err(Error::Schema(format!(
                "{} parameters given, the model has {}",
                params.len(),
                p.store.len()
            )));
        }
        for (_, param) in params.iter() {
            match p.store.by_name(&param.name) {
                Some(t) if t.shape() == param.value.shape() => {}
                Some(t) => {
                    return Err(Error::Schema(format!(
                        "parameter `{}` has shape {:?}, the model expects {:?}",
                        param.name,
                        param.value.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Schema(format!("unknown parameter `{}`", param.name))),
            }
        }
        p.store.copy_matching(params);
        Ok(p)
    }

    /// Inference: per-step predicted masks `[nodes, h * w]`.
    pub fn predict_masks(
        &self,
        graphs: &[AttributedGraph],
        controls: &[Tensor],
        reencode: bool,
    ) -> Result<Vec<Tensor>> {
        let mut ctx = Ctx::frozen(&self.store);
        let (_, steps) = self.model.forward(&mut ctx, graphs, controls, reencode)?;
        Ok(steps
            .iter()
            .map(|s| ctx.tape.value(s.masks).clone())
            .collect())
    }
}
