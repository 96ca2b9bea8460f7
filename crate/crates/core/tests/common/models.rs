//! Random inputs and parameter perturbations for predictor tests.

use objdyn::graphnet::{fully_connected_edges, AttributedGraph, Edge, EdgeAttr, NodeAttr};
use objdyn::models::{ModelConfig, ModelVariant, Predictor, Preset};
use objdyn::tensor::{ParamStore, Tensor};
use rand::Rng;

/// Small frames keep the desk-preset networks fast.
pub const W: usize = 16;
pub const H: usize = 8;

pub fn config(variant: ModelVariant) -> ModelConfig {
    ModelConfig::from_preset(Preset::Desk, variant, W, H).unwrap()
}

/// Predictor whose parameters (including zero-initialized layers and batch
/// norm statistics) are all moved away from their initial values.
pub fn perturbed(variant: ModelVariant, seed: u64, rng: &mut impl Rng) -> Predictor {
    let mut p = Predictor::new(config(variant), seed).unwrap();
    jitter(&mut p.store, rng);
    p
}

pub fn jitter(store: &mut ParamStore, rng: &mut impl Rng) {
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let v = store.value_mut(id).data_mut();
        if name.ends_with("running_var") {
            v.iter_mut().for_each(|x| *x = rng.gen_range(0.5..1.5));
        } else {
            v.iter_mut().for_each(|x| *x += rng.gen_range(-0.05..0.05));
        }
    }
}

fn binary(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len)
        .map(|_| f64::from(u8::from(rng.gen_bool(0.3))))
        .collect()
}

/// A graph with the attributes `cfg.variant` consumes.
pub fn graph(cfg: &ModelConfig, n: usize, rng: &mut impl Rng) -> AttributedGraph {
    let v = cfg.variant;
    let [c, h, w] = cfg.visual_shape();
    let px = h * w;
    let nodes = (0..n)
        .map(|_| {
            let mut data: Vec<f64> = (0..c * px).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mc = v.mask_channel() * px;
            data[mc..mc + px].copy_from_slice(&binary(px, rng));
            NodeAttr {
                visual: Some(Tensor::new(vec![c, h, w], data).unwrap()),
                pose: v
                    .has_pose()
                    .then(|| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))),
                latent: None,
            }
        })
        .collect();
    let m = cfg.nets.edge_mask;
    let edges = if v.has_edges() {
        fully_connected_edges(n)
            .into_iter()
            .map(|(sender, receiver)| Edge {
                sender,
                receiver,
                attr: if v.has_pose_edges() {
                    EdgeAttr::Pose(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                } else {
                    EdgeAttr::Segm(Tensor::new(vec![1, m.h, m.w], binary(m.h * m.w, rng)).unwrap())
                },
            })
            .collect()
    } else {
        vec![]
    };
    AttributedGraph {
        global: Tensor::zeros(&[6]),
        nodes,
        edges,
    }
}

/// `steps` control tensors `[graphs, 6]`.
pub fn controls(graphs: usize, steps: usize, rng: &mut impl Rng) -> Vec<Tensor> {
    (0..steps)
        .map(|_| Tensor::randn(&[graphs, 6], 0.5, rng))
        .collect()
}
