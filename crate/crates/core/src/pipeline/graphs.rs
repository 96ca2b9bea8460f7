use crate::error::{Error, Result};
use crate::graphnet::{fully_connected_edges, AttributedGraph, Edge, EdgeAttr, NodeAttr};
use crate::models::input::{downsample, object_visual, pose, pose_edge};
use crate::models::{ModelConfig, StepTargets};
use crate::sim::Episode;
use crate::tensor::{Hw, Tensor};

fn check_episode(ep: &Episode, cfg: &ModelConfig) -> Result<()> {
    if (ep.w, ep.h) != (cfg.width, cfg.height) {
        return Err(Error::Schema(format!(
            "episode frames are {}x{}, the model expects {}x{}",
            ep.w, ep.h, cfg.width, cfg.height
        )));
    }
    if ep.n == 0 || ep.is_empty() {
        return Err(Error::Schema("episode has no objects or no frames".into()));
    }
    Ok(())
}

/// Sender mask of object `i` at step `t`, resampled to the edge-mask size.
fn edge_mask(ep: &Episode, t: usize, i: usize, cfg: &ModelConfig) -> Tensor {
    let m = cfg.nets.edge_mask;
    let src: Vec<f64> = ep.mask(t, i).iter().map(|&v| f64::from(v)).collect();
    let small = downsample(&src, Hw::new(ep.h, ep.w), m);
    Tensor::new(vec![1, m.h, m.w], small).expect("sized by construction")
}

/// Raw control applied between step `t` and `t + 1`.
pub fn control(ep: &Episode, t: usize) -> [f64; 6] {
    ep.frames[t].control.map(f64::from)
}

/// The input graph of step `t` for the variant of `cfg`. For `t = 0` the
/// previous position in pose edges is the current one.
pub fn step_graph(ep: &Episode, t: usize, cfg: &ModelConfig) -> Result<AttributedGraph> {
    check_episode(ep, cfg)?;
    if t >= ep.len() {
        return Err(Error::Horizon {
            start: t,
            horizon: 0,
            len: ep.len(),
        });
    }
    let v = cfg.variant;
    let frame = &ep.frames[t];
    let prev = &ep.frames[t.saturating_sub(1)];
    let nodes = (0..ep.n)
        .map(|i| NodeAttr {
            visual: Some(
                Tensor::new(
                    cfg.visual_shape().to_vec(),
                    object_visual(frame, i, ep.w, ep.h, v, None),
                )
                .expect("sized by construction"),
            ),
            pose: v.has_pose().then(|| pose(frame, i)),
            latent: None,
        })
        .collect();
    let edges = if v.is_gn() && v.has_edges() {
        fully_connected_edges(ep.n)
            .into_iter()
            .map(|(sender, receiver)| Edge {
                sender,
                receiver,
                attr: if v.has_pose_edges() {
                    EdgeAttr::Pose(pose_edge(prev, frame, sender))
                } else {
                    EdgeAttr::Segm(edge_mask(ep, t, sender, cfg))
                },
            })
            .collect()
    } else {
        vec![]
    };
    Ok(AttributedGraph {
        global: Tensor::from_vec(control(ep, t).to_vec()),
        nodes,
        edges,
    })
}

/// One graph per recorded step.
pub fn episode_to_graphs(ep: &Episode, cfg: &ModelConfig) -> Result<Vec<AttributedGraph>> {
    (0..ep.len()).map(|t| step_graph(ep, t, cfg)).collect()
}

/// Rows of `f(sample)` for every sample, concatenated in order.
fn stacked(
    rows: usize,
    width: usize,
    samples: &[(&Episode, usize)],
    f: impl Fn(&Episode, usize, &mut Vec<f64>),
) -> Tensor {
    let mut data = Vec::with_capacity(rows * width);
    for &(ep, t) in samples {
        f(ep, t, &mut data);
    }
    Tensor::new(vec![rows, width], data).expect("sized by construction")
}

/// Ground truth of step `t` for a batch of samples `(episode, t)`, in the
/// row order of the batched model output.
pub fn step_targets(samples: &[(&Episode, usize)], cfg: &ModelConfig) -> StepTargets {
    let v = cfg.variant;
    let px = cfg.pixels();
    let nodes: usize = samples.iter().map(|(ep, _)| ep.n).sum();
    let masks = stacked(nodes, px, samples, |ep, t, out| {
        for i in 0..ep.n {
            out.extend(ep.mask(t, i).iter().map(|&m| f64::from(m)));
        }
    });
    let poses = v.has_pose().then(|| {
        stacked(nodes, 6, samples, |ep, t, out| {
            for i in 0..ep.n {
                out.extend(pose(&ep.frames[t], i));
            }
        })
    });
    let edges = if v.is_gn() && v.has_edges() {
        let n_edges: usize = samples.iter().map(|(ep, _)| ep.n * (ep.n - 1)).sum();
        let m = cfg.nets.edge_mask;
        let width = if v.has_pose_edges() { 9 } else { m.h * m.w };
        Some(stacked(n_edges, width, samples, |ep, t, out| {
            for (s, _) in fully_connected_edges(ep.n) {
                if v.has_pose_edges() {
                    out.extend(pose_edge(&ep.frames[t.saturating_sub(1)], &ep.frames[t], s));
                } else {
                    out.extend_from_slice(edge_mask(ep, t, s, cfg).data());
                }
            }
        }))
    } else {
        None
    };
    StepTargets {
        masks,
        poses,
        edges,
    }
}

/// Object inputs `[objects, c * h * w]` of step `t` for a batch of samples,
/// used to compute latent targets.
pub fn visual_rows(samples: &[(&Episode, usize)], cfg: &ModelConfig) -> Tensor {
    let nodes: usize = samples.iter().map(|(ep, _)| ep.n).sum();
    let width: usize = cfg.visual_shape().iter().product();
    stacked(nodes, width, samples, |ep, t, out| {
        for i in 0..ep.n {
            out.extend(object_visual(
                &ep.frames[t],
                i,
                ep.w,
                ep.h,
                cfg.variant,
                None,
            ));
        }
    })
}

/// Per-step control tensors `[samples, 6]` for steps `t, t + 1, ...,
/// t + n - 1` of every sample.
pub fn control_steps(samples: &[(&Episode, usize)], n: usize) -> Vec<Tensor> {
    (0..n)
        .map(|k| {
            let data = samples
                .iter()
                .flat_map(|&(ep, t)| control(ep, t + k))
                .collect();
            Tensor::new(vec![samples.len(), 6], data).expect("sized by construction")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelVariant, Preset};
    use crate::sim::{generate_episode, Role};

    fn ep() -> Episode {
        generate_episode(&Role::Train3.config(32, 24), 3).unwrap()
    }

    fn cfg(v: ModelVariant) -> ModelConfig {
        ModelConfig::from_preset(Preset::Desk, v, 32, 24).unwrap()
    }

    #[test]
    fn pose_edges_and_first_step_boundary() {
        let ep = ep();
        let gs = episode_to_graphs(&ep, &cfg(ModelVariant::GnPosVel)).unwrap();
        assert_eq!(gs.len(), ep.len());
        for g in &gs {
            assert_eq!(g.nodes.len(), 3);
            assert_eq!(g.edges.len(), 6);
        }
        for e in &gs[0].edges {
            let EdgeAttr::Pose(a) = e.attr else {
                panic!("pose edge expected")
            };
            assert_eq!(a[3..6], a[6..9]);
            let p = ep.frames[0].pos[e.sender].map(f64::from);
            assert_eq!(a[6..9], p);
            assert_eq!(a[0..3], ep.frames[0].vel[e.sender].map(f64::from));
        }
        let EdgeAttr::Pose(a) = gs[2].edges[0].attr else {
            panic!()
        };
        assert_eq!(a[3..6], ep.frames[1].pos[0].map(f64::from));
    }

    #[test]
    fn variant_schemas() {
        let ep = ep();
        assert!(episode_to_graphs(&ep, &cfg(ModelVariant::GnNoEdges))
            .unwrap()
            .iter()
            .all(|g| g.edges.is_empty()));
        let g = step_graph(&ep, 1, &cfg(ModelVariant::GnSegm)).unwrap();
        assert_eq!(g.edges.len(), 6);
        assert!(matches!(&g.edges[0].attr, EdgeAttr::Segm(t) if t.shape() == [1, 6, 8]));
        let g = step_graph(&ep, 1, &cfg(ModelVariant::Ap)).unwrap();
        assert!(g.edges.is_empty() && g.nodes[0].pose.is_none());
        assert_eq!(g.global.data(), control(&ep, 1));
        let small = ModelConfig::from_preset(Preset::Desk, ModelVariant::Ap, 16, 8).unwrap();
        assert!(step_graph(&ep, 0, &small).is_err());
        assert!(step_graph(&ep, ep.len(), &cfg(ModelVariant::Ap)).is_err());
    }

    #[test]
    fn targets_follow_batch_order() {
        let ep = ep();
        let c = cfg(ModelVariant::GnPosVel);
        let t = step_targets(&[(&ep, 2), (&ep, 3)], &c);
        assert_eq!(t.masks.shape(), [6, 32 * 24]);
        assert_eq!(
            t.masks.row(4),
            ep.mask(3, 1)
                .iter()
                .map(|&m| f64::from(m))
                .collect::<Vec<_>>()
        );
        assert_eq!(t.poses.unwrap().row(3), pose(&ep.frames[3], 0));
        assert_eq!(t.edges.unwrap().shape(), [12, 9]);
        let cs = control_steps(&[(&ep, 2), (&ep, 3)], 2);
        assert_eq!(cs[1].row(0), control(&ep, 3));
        assert_eq!(cs[1].row(1), control(&ep, 4));
    }
}
