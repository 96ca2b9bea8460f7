use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Attributes of one node. Which fields are present depends on the model
/// variant; all nodes of a graph share one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAttr {
    /// Stacked frames `[channels, h, w]`.
    pub visual: Option<Tensor>,
    /// Position (3) followed by linear velocity (3).
    pub pose: Option<[f64; 6]>,
    pub latent: Option<Tensor>,
}

impl NodeAttr {
    fn schema(&self) -> (Option<Vec<usize>>, bool, Option<Vec<usize>>) {
        (
            self.visual.as_ref().map(|t| t.shape().to_vec()),
            self.pose.is_some(),
            self.latent.as_ref().map(|t| t.shape().to_vec()),
        )
    }

    /// Flat feature row: visual, then pose, then latent.
    pub fn flatten(&self) -> Vec<f64> {
        let mut row = Vec::new();
        if let Some(v) = &self.visual {
            row.extend_from_slice(v.data());
        }
        if let Some(p) = &self.pose {
            row.extend_from_slice(p);
        }
        if let Some(l) = &self.latent {
            row.extend_from_slice(l.data());
        }
        row
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EdgeAttr {
    /// Sender velocity (3), sender previous position (3), sender position (3).
    Pose([f64; 9]),
    /// Sender segmentation mask `[1, h, w]`.
    Segm(Tensor),
    Absent,
}

impl EdgeAttr {
    fn schema(&self) -> Option<Vec<usize>> {
        match self {
            EdgeAttr::Pose(_) => Some(vec![9]),
            EdgeAttr::Segm(t) => Some(t.shape().to_vec()),
            EdgeAttr::Absent => None,
        }
    }

    fn flatten(&self) -> &[f64] {
        match self {
            EdgeAttr::Pose(v) => v,
            EdgeAttr::Segm(t) => t.data(),
            EdgeAttr::Absent => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub sender: usize,
    pub receiver: usize,
    pub attr: EdgeAttr,
}

/// A graph `(u, V, E)` with a global attribute, node attributes and directed
/// attributed edges.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    pub global: Tensor,
    pub nodes: Vec<NodeAttr>,
    pub edges: Vec<Edge>,
}

/// Ordered pairs `(sender, receiver)` connecting every node to every other
/// node, sender-major, no self-loops.
pub fn fully_connected_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|s| (0..n).filter(move |&r| r != s).map(move |r| (s, r)))
        .collect()
}

impl AttributedGraph {
    /// Checks index ranges, self-loops and schema uniformity.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for e in &self.edges {
            if e.sender >= n || e.receiver >= n {
                return Err(Error::Graph(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.sender, e.receiver
                )));
            }
            if e.sender == e.receiver {
                return Err(Error::Graph(format!("self-loop on node {}", e.sender)));
            }
        }
        if let Some(first) = self.nodes.first() {
            let s = first.schema();
            if self.nodes.iter().any(|v| v.schema() != s) {
                return Err(Error::Graph(
                    "nodes do not share one attribute schema".into(),
                ));
            }
        }
        if let Some(first) = self.edges.first() {
            let s = first.attr.schema();
            if self.edges.iter().any(|e| e.attr.schema() != s) {
                return Err(Error::Graph(
                    "edges do not share one attribute shape".into(),
                ));
            }
        }
        Ok(())
    }

    /// Reorders nodes so that new node `i` is old node `perm[i]`, re-indexing
    /// edges accordingly. Edge order is kept.
    pub fn permute_nodes(&self, perm: &[usize]) -> AttributedGraph {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        AttributedGraph {
            global: self.global.clone(),
            nodes: perm.iter().map(|&i| self.nodes[i].clone()).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    sender: inv[e.sender],
                    receiver: inv[e.receiver],
                    attr: e.attr.clone(),
                })
                .collect(),
        }
    }

    pub fn node_matrix(&self) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = self.nodes.iter().map(NodeAttr::flatten).collect();
        Tensor::from_rows(&rows)
    }

    /// Edge attribute rows; `None` when there are no edges or they carry no
    /// attributes.
    pub fn edge_matrix(&self) -> Result<Option<Tensor>> {
        if self
            .edges
            .iter()
            .all(|e| matches!(e.attr, EdgeAttr::Absent))
        {
            return Ok(None);
        }
        let width = self.edges.first().map_or(0, |e| e.attr.flatten().len());
        let mut data = Vec::with_capacity(self.edges.len() * width);
        for e in &self.edges {
            data.extend_from_slice(e.attr.flatten());
        }
        Tensor::new(vec![self.edges.len(), width], data).map(Some)
    }

    /// Places a batch of graphs on `tape` as constants.
    pub fn batch(tape: &mut Tape, graphs: &[AttributedGraph]) -> Result<GraphVars> {
        if graphs.is_empty() {
            return Err(Error::Graph("empty graph batch".into()));
        }
        for g in graphs {
            g.validate()?;
        }
        let topo = Topology::from_graphs(graphs.iter().map(|g| {
            (
                g.nodes.len(),
                g.edges.iter().map(|e| (e.sender, e.receiver)).collect(),
            )
        }));
        let nodes: Vec<Tensor> = graphs
            .iter()
            .map(|g| g.node_matrix())
            .collect::<Result<_>>()?;
        let nodes = tape.constant(Tensor::cat_rows(&nodes)?);
        // graphs without edges (e.g. a single node) contribute no rows
        let edge_mats: Vec<Option<Tensor>> = graphs
            .iter()
            .filter(|g| !g.edges.is_empty())
            .map(|g| g.edge_matrix())
            .collect::<Result<_>>()?;
        let edges = if !edge_mats.is_empty() && edge_mats.iter().all(Option::is_some) {
            let mats: Vec<Tensor> = edge_mats.into_iter().flatten().collect();
            Some(tape.constant(Tensor::cat_rows(&mats)?))
        } else {
            None
        };
        let globals: Vec<Tensor> = graphs
            .iter()
            .map(|g| {
                let n = g.global.len();
                g.global.clone().reshape(&[1, n])
            })
            .collect::<Result<_>>()?;
        let globals = tape.constant(Tensor::cat_rows(&globals)?);
        Ok(GraphVars {
            nodes,
            edges,
            globals,
            topo: Arc::new(topo),
        })
    }
}

/// Connectivity of a batch of graphs flattened into one node/edge index space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub senders: Vec<usize>,
    pub receivers: Vec<usize>,
    /// Graph index of every node.
    pub node_graph: Vec<usize>,
    /// Graph index of every edge.
    pub edge_graph: Vec<usize>,
    pub n_graphs: usize,
    /// First node index of every graph.
    pub node_offsets: Vec<usize>,
}

impl Topology {
    /// Builds the batched topology from `(node count, local edges)` per graph.
    pub fn from_graphs(graphs: impl IntoIterator<Item = (usize, Vec<(usize, usize)>)>) -> Self {
        let mut t = Topology {
            senders: vec![],
            receivers: vec![],
            node_graph: vec![],
            edge_graph: vec![],
            n_graphs: 0,
            node_offsets: vec![],
        };
        for (gi, (n, edges)) in graphs.into_iter().enumerate() {
            let base = t.node_graph.len();
            t.node_offsets.push(base);
            t.node_graph.extend(std::iter::repeat(gi).take(n));
            for (s, r) in edges {
                t.senders.push(base + s);
                t.receivers.push(base + r);
                t.edge_graph.push(gi);
            }
            t.n_graphs += 1;
        }
        t
    }

    /// Fully connected graphs (no self-loops) with the given node counts.
    pub fn fully_connected(counts: &[usize]) -> Self {
        Self::from_graphs(counts.iter().map(|&n| (n, fully_connected_edges(n))))
    }

    /// Graphs with the given node counts and no edges.
    pub fn edgeless(counts: &[usize]) -> Self {
        Self::from_graphs(counts.iter().map(|&n| (n, vec![])))
    }

    pub fn n_nodes(&self) -> usize {
        self.node_graph.len()
    }

    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }

    /// Node count of graph `g`.
    pub fn graph_size(&self, g: usize) -> usize {
        let end = self
            .node_offsets
            .get(g + 1)
            .copied()
            .unwrap_or(self.n_nodes());
        end - self.node_offsets[g]
    }
}

/// A batch of graphs whose attributes live on a tape.
#[derive(Clone, Debug)]
pub struct GraphVars {
    pub nodes: crate::tensor::Var,
    pub edges: Option<crate::tensor::Var>,
    pub globals: crate::tensor::Var,
    pub topo: Arc<Topology>,
}
