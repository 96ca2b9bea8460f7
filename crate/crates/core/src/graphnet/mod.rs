//! Attributed graphs and the graph-network block algebra.
//!
//! Data-level graphs ([`AttributedGraph`]) hold per-node and per-edge
//! attributes. For computation, a batch of graphs is flattened into
//! [`GraphVars`]: one node matrix, one optional edge matrix and one global
//! matrix on a tape, plus the shared [`Topology`] (senders, receivers and
//! graph membership). Aggregations are elementwise sums.

mod blocks;
mod graph;

pub use blocks::{
    concat_graphs, encode_process_decode, full_gn_block, independent_block, replace_global,
    EpdFunctions, EpdStep, FnBlock, GraphFn,
};
pub use graph::{
    fully_connected_edges, AttributedGraph, Edge, EdgeAttr, GraphVars, NodeAttr, Topology,
};
