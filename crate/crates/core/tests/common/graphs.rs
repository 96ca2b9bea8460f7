//! Random attributed graphs and small MLP blocks for graph-network tests.

use objdyn::graphnet::{
    full_gn_block, fully_connected_edges, AttributedGraph, Edge, EdgeAttr, GraphVars, NodeAttr,
};
use objdyn::tensor::{mlp_specs, Ctx, ParamStore, Sequential, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

pub const NODE_W: usize = 4;
pub const EDGE_W: usize = 3;
pub const GLOBAL_W: usize = 2;

pub fn random_graph(n: usize, rng: &mut impl Rng) -> AttributedGraph {
    AttributedGraph {
        global: Tensor::randn(&[GLOBAL_W], 1.0, rng),
        nodes: (0..n)
            .map(|_| NodeAttr {
                visual: None,
                pose: None,
                latent: Some(Tensor::randn(&[NODE_W], 1.0, rng)),
            })
            .collect(),
        edges: fully_connected_edges(n)
            .into_iter()
            .map(|(sender, receiver)| Edge {
                sender,
                receiver,
                attr: EdgeAttr::Segm(Tensor::randn(&[EDGE_W], 1.0, rng)),
            })
            .collect(),
    }
}

pub fn random_perm(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Edge, node and global MLPs sized for [`random_graph`] inputs.
pub struct CoreMlps {
    pub store: ParamStore,
    pub phi_e: Sequential,
    pub phi_v: Sequential,
    pub phi_u: Sequential,
}

impl CoreMlps {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut store = ParamStore::new();
        let (e_out, v_out, u_out) = (5, 6, 3);
        let phi_e = Sequential::build(
            &mut store,
            "e",
            &mlp_specs(&[8], e_out),
            &[EDGE_W + 2 * NODE_W + GLOBAL_W],
            rng,
        )
        .unwrap();
        let phi_v = Sequential::build(
            &mut store,
            "v",
            &mlp_specs(&[8], v_out),
            &[e_out + NODE_W + GLOBAL_W],
            rng,
        )
        .unwrap();
        let phi_u = Sequential::build(
            &mut store,
            "u",
            &mlp_specs(&[8], u_out),
            &[e_out + v_out + GLOBAL_W],
            rng,
        )
        .unwrap();
        // nonzero batch-norm statistics so evaluation mode is not the identity
        for (id, p) in store
            .iter()
            .map(|(id, p)| (id, p.name.clone()))
            .collect::<Vec<_>>()
        {
            if p.ends_with("running_mean") {
                store
                    .value_mut(id)
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-0.5..0.5));
            }
        }
        CoreMlps {
            store,
            phi_e,
            phi_v,
            phi_u,
        }
    }

    /// Runs one full block on `g` and returns (nodes, edges, global) values.
    pub fn run(&self, g: &AttributedGraph) -> (Tensor, Tensor, Tensor) {
        let mut ctx = Ctx::eval(&self.store);
        let gv: GraphVars = AttributedGraph::batch(&mut ctx.tape, std::slice::from_ref(g)).unwrap();
        let out = full_gn_block(&mut ctx, &gv, &self.phi_e, &self.phi_v, &self.phi_u).unwrap();
        let e = out.edges.map(|e| ctx.tape.value(e).clone()).unwrap();
        (
            ctx.tape.value(out.nodes).clone(),
            e,
            ctx.tape.value(out.globals).clone(),
        )
    }
}

/// Largest deviation between `permuted` (computed on the permuted graph) and
/// `base` rows reordered by `perm`.
pub fn perm_rows_deviation(base: &Tensor, permuted: &Tensor, perm: &[usize]) -> f64 {
    base.select_rows(perm).max_abs_diff(permuted)
}
