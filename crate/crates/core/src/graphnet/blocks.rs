use std::sync::Arc;

use super::graph::GraphVars;
use crate::error::{Error, Result};
use crate::tensor::{Ctx, Sequential, Tensor, Var};

/// A learnable (or fixed) function applied row-wise inside a graph block.
pub trait GraphFn {
    /// Output width per row.
    fn out_width(&self) -> usize;
    fn apply(&self, ctx: &mut Ctx, x: Var) -> Result<Var>;
}

impl GraphFn for Sequential {
    fn out_width(&self) -> usize {
        Sequential::out_width(self)
    }

    fn apply(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        self.forward(ctx, x)
    }
}

/// Adapts a closure into a [`GraphFn`] with a declared output width.
pub struct FnBlock<F> {
    pub width: usize,
    pub f: F,
}

impl<F> FnBlock<F>
where
    F: Fn(&mut Ctx, Var) -> Result<Var>,
{
    pub fn new(width: usize, f: F) -> Self {
        FnBlock { width, f }
    }
}

impl<F> GraphFn for FnBlock<F>
where
    F: Fn(&mut Ctx, Var) -> Result<Var>,
{
    fn out_width(&self) -> usize {
        self.width
    }

    fn apply(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let y = (self.f)(ctx, x)?;
        let s = ctx.tape.shape(y);
        if s.len() != 2 || s[1] != self.width {
            return Err(Error::Graph(format!(
                "block declared width {} but produced {s:?}",
                self.width
            )));
        }
        Ok(y)
    }
}

fn check_width(ctx: &Ctx, v: Var, f: &dyn GraphFn, what: &str) -> Result<()> {
    let s = ctx.tape.shape(v);
    if s.len() != 2 || s[1] != f.out_width() {
        return Err(Error::Graph(format!(
            "{what} produced {s:?}, block signature says width {}",
            f.out_width()
        )));
    }
    Ok(())
}

/// Full graph-network block.
///
/// Per edge: `e' = phi_e([e, v_sender, v_receiver, u])`.
/// Per node: `v' = phi_v([sum of incoming e', v, u])`.
/// Global: `u' = phi_u([sum of all e', sum of all v', u])`.
/// Empty sums are zero rows of the declared width; when the graph has no
/// edges `phi_e` is never called. Edge attributes may be absent, in which
/// case the edge input is `[v_sender, v_receiver, u]`.
pub fn full_gn_block(
    ctx: &mut Ctx,
    g: &GraphVars,
    phi_e: &dyn GraphFn,
    phi_v: &dyn GraphFn,
    phi_u: &dyn GraphFn,
) -> Result<GraphVars> {
    let topo = &g.topo;
    let (n_nodes, n_graphs) = (topo.n_nodes(), topo.n_graphs);
    check_rows(ctx, g)?;
    let ew = phi_e.out_width();

    let new_edges = if topo.n_edges() > 0 {
        let vs = ctx.tape.gather_rows(g.nodes, &topo.senders)?;
        let vr = ctx.tape.gather_rows(g.nodes, &topo.receivers)?;
        let ue = ctx.tape.gather_rows(g.globals, &topo.edge_graph)?;
        let mut parts = Vec::with_capacity(4);
        if let Some(e) = g.edges {
            parts.push(e);
        }
        parts.extend([vs, vr, ue]);
        let input = ctx.tape.concat(&parts)?;
        let e = phi_e.apply(ctx, input)?;
        check_width(ctx, e, phi_e, "edge function")?;
        Some(e)
    } else {
        None
    };

    let (agg_nodes, agg_global_e) = match new_edges {
        Some(e) => (
            ctx.tape.scatter_add_rows(e, &topo.receivers, n_nodes)?,
            ctx.tape.scatter_add_rows(e, &topo.edge_graph, n_graphs)?,
        ),
        None => (
            ctx.tape.constant(Tensor::zeros(&[n_nodes, ew])),
            ctx.tape.constant(Tensor::zeros(&[n_graphs, ew])),
        ),
    };

    let un = ctx.tape.gather_rows(g.globals, &topo.node_graph)?;
    let node_in = ctx.tape.concat(&[agg_nodes, g.nodes, un])?;
    let v = phi_v.apply(ctx, node_in)?;
    check_width(ctx, v, phi_v, "node function")?;

    let agg_global_v = ctx.tape.scatter_add_rows(v, &topo.node_graph, n_graphs)?;
    let global_in = ctx.tape.concat(&[agg_global_e, agg_global_v, g.globals])?;
    let u = phi_u.apply(ctx, global_in)?;
    check_width(ctx, u, phi_u, "global function")?;

    Ok(GraphVars {
        nodes: v,
        edges: new_edges,
        globals: u,
        topo: Arc::clone(&g.topo),
    })
}

fn check_rows(ctx: &Ctx, g: &GraphVars) -> Result<()> {
    let t = &g.topo;
    if ctx.tape.value(g.nodes).rows() != t.n_nodes()
        || ctx.tape.value(g.globals).rows() != t.n_graphs
    {
        return Err(Error::Graph("attribute rows disagree with topology".into()));
    }
    if let Some(e) = g.edges {
        if ctx.tape.value(e).rows() != t.n_edges() {
            return Err(Error::Graph("edge rows disagree with topology".into()));
        }
    }
    Ok(())
}

/// Applies `fe`, `fv`, `fu` to every edge, node and global independently
/// (no message passing). A `None` function leaves that element unchanged.
pub fn independent_block(
    ctx: &mut Ctx,
    g: &GraphVars,
    fe: Option<&dyn GraphFn>,
    fv: Option<&dyn GraphFn>,
    fu: Option<&dyn GraphFn>,
) -> Result<GraphVars> {
    check_rows(ctx, g)?;
    let edges = match (g.edges, fe) {
        (Some(e), Some(f)) if g.topo.n_edges() > 0 => {
            let y = f.apply(ctx, e)?;
            check_width(ctx, y, f, "edge function")?;
            Some(y)
        }
        (e, _) => e,
    };
    let nodes = match fv {
        Some(f) => {
            let y = f.apply(ctx, g.nodes)?;
            check_width(ctx, y, f, "node function")?;
            y
        }
        None => g.nodes,
    };
    let globals = match fu {
        Some(f) => {
            let y = f.apply(ctx, g.globals)?;
            check_width(ctx, y, f, "global function")?;
            y
        }
        None => g.globals,
    };
    Ok(GraphVars {
        nodes,
        edges,
        globals,
        topo: Arc::clone(&g.topo),
    })
}

/// Returns `g` with its global attribute replaced by `c_latent`.
pub fn replace_global(ctx: &Ctx, g: &GraphVars, c_latent: Var) -> Result<GraphVars> {
    let (old, new) = (ctx.tape.shape(g.globals), ctx.tape.shape(c_latent));
    if old != new {
        return Err(Error::Graph(format!(
            "global width mismatch: {old:?} vs {new:?}"
        )));
    }
    Ok(GraphVars {
        globals: c_latent,
        ..g.clone()
    })
}

/// Concatenates node, edge and global attributes of two graphs with the same
/// topology.
pub fn concat_graphs(ctx: &mut Ctx, a: &GraphVars, b: &GraphVars) -> Result<GraphVars> {
    if a.topo != b.topo {
        return Err(Error::Graph(
            "cannot concatenate graphs with different topology".into(),
        ));
    }
    let nodes = ctx.tape.concat(&[a.nodes, b.nodes])?;
    let edges = match (a.edges, b.edges) {
        (Some(x), Some(y)) => Some(ctx.tape.concat(&[x, y])?),
        (None, None) => None,
        _ => {
            return Err(Error::Graph(
                "one graph has edge attributes, the other does not".into(),
            ))
        }
    };
    let globals = ctx.tape.concat(&[a.globals, b.globals])?;
    Ok(GraphVars {
        nodes,
        edges,
        globals,
        topo: Arc::clone(&a.topo),
    })
}

/// The functions of an encode-process-decode model.
pub struct EpdFunctions<'a> {
    pub encode_edge: Option<&'a dyn GraphFn>,
    pub encode_node: &'a dyn GraphFn,
    /// Encodes a raw control vector into the latent global.
    pub encode_control: &'a dyn GraphFn,
    pub core_edge: &'a dyn GraphFn,
    pub core_node: &'a dyn GraphFn,
    pub core_global: &'a dyn GraphFn,
    pub decode_edge: Option<&'a dyn GraphFn>,
    pub decode_node: &'a dyn GraphFn,
}

/// Output of one processing step.
pub struct EpdStep {
    pub latent: GraphVars,
    pub decoded: GraphVars,
}

/// Encode once, then for each control: replace the global with the encoded
/// control, run the core on `[encoded input, current latent]` and decode the
/// result independently. Returns one step per control.
pub fn encode_process_decode(
    ctx: &mut Ctx,
    input: &GraphVars,
    controls: &[Var],
    f: &EpdFunctions,
) -> Result<Vec<EpdStep>> {
    if controls.is_empty() {
        return Err(Error::Graph(
            "encode-process-decode needs at least one control step".into(),
        ));
    }
    let first_control = f.encode_control.apply(ctx, controls[0])?;
    let encoded = independent_block(ctx, input, f.encode_edge, Some(f.encode_node), None)?;
    let encoded = GraphVars {
        globals: first_control,
        ..encoded
    };
    let mut latent = encoded.clone();
    let mut out = Vec::with_capacity(controls.len());
    for &c in controls {
        let c_latent = f.encode_control.apply(ctx, c)?;
        let merged = concat_graphs(ctx, &encoded, &latent)?;
        let merged = GraphVars {
            globals: c_latent,
            ..merged
        };
        let next = full_gn_block(ctx, &merged, f.core_edge, f.core_node, f.core_global)?;
        let decoded = independent_block(ctx, &next, f.decode_edge, Some(f.decode_node), None)?;
        out.push(EpdStep {
            latent: next.clone(),
            decoded,
        });
        latent = next;
    }
    Ok(out)
}
