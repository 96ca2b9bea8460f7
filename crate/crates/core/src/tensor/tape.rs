//! The differentiation record.

use super::kernels::{self, ConvGeom, Dims4};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    TranspConv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Affine {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Concat {
        parts: Vec<Var>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    ScatterRows {
        x: Var,
        idx: Vec<usize>,
    },
    SumAll(Var),
    BceRows {
        pred: Var,
        target: Vec<f64>,
    },
    SqErrRows(Var, Var),
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of a forward computation. Node ids increase in evaluation
/// order, so reverse id order is a valid topological order for backward.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient buffers indexed by [`Var`]; `None` for nodes that do not depend
/// on any differentiable leaf.
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Differentiable leaf (parameters, gradient-check inputs).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        let rg = op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, op, rg)
    }

    /// Reverse pass from a scalar root. Gradients of nodes consumed more than
    /// once are summed over all consumers.
    pub fn backward(&self, root: Var) -> Result<Grads> {
        let rv = &self.nodes[root.0].value;
        if rv.len() != 1 {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.pullback(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn val(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn pullback(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm(m, n, k, 1.0, g, false, self.val(*b), true, 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm(k, m, n, 1.0, self.val(*a), true, g, false, 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::AddBias(x, b) => {
                if self.rg(*x) {
                    accumulate(grads, *x, g.to_vec());
                }
                if self.rg(*b) {
                    let feats = out_shape[1];
                    let inner: usize = out_shape[2..].iter().product();
                    let mut db = vec![0.0; feats];
                    for (i, chunk) in g.chunks(inner).enumerate() {
                        db[i % feats] += chunk.iter().sum::<f64>();
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Conv2d { x, w, geom } => {
                let xd = Dims4::from_shape(self.shape(*x)).expect("conv input rank 4");
                let (o, oh, ow) = (out_shape[1], out_shape[2], out_shape[3]);
                let (dx, dw) = kernels::conv2d_backward(
                    self.val(*x),
                    xd,
                    self.val(*w),
                    o,
                    geom,
                    oh,
                    ow,
                    g,
                    self.rg(*x),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    accumulate(grads, *w, dw);
                }
            }
            Op::TranspConv2d { x, w, geom } => {
                let xd = Dims4::from_shape(self.shape(*x)).expect("transpconv input rank 4");
                let (o, oh, ow) = (out_shape[1], out_shape[2], out_shape[3]);
                let (dx, dw) = kernels::transp_backward(
                    self.val(*x),
                    xd,
                    self.val(*w),
                    o,
                    geom,
                    oh,
                    ow,
                    g,
                    self.rg(*x),
                );
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    accumulate(grads, *w, dw);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = vec![0.0; self.val(*x).len()];
                for (gi, &src) in g.iter().zip(argmax) {
                    dx[src] += gi;
                }
                accumulate(grads, *x, dx);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let s = self.shape(*x);
                let (rows, feats) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                let m = (rows * inner) as f64;
                let gm = self.val(*gamma);
                let mut dgamma = vec![0.0; feats];
                let mut dbeta = vec![0.0; feats];
                for r in 0..rows {
                    for f in 0..feats {
                        let o = (r * feats + f) * inner;
                        for i in o..o + inner {
                            dgamma[f] += g[i] * xhat[i];
                            dbeta[f] += g[i];
                        }
                    }
                }
                if self.rg(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..rows {
                        for f in 0..feats {
                            let o = (r * feats + f) * inner;
                            let k = gm[f] * inv_std[f] / m;
                            for i in o..o + inner {
                                dx[i] = k * (m * g[i] - dbeta[f] - xhat[i] * dgamma[f]);
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
                if self.rg(*gamma) {
                    accumulate(grads, *gamma, dgamma);
                }
                if self.rg(*beta) {
                    accumulate(grads, *beta, dbeta);
                }
            }
            Op::Affine {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let s = self.shape(*x);
                let (rows, feats) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                let xv = self.val(*x);
                let gm = self.val(*gamma);
                let mut dx = vec![0.0; g.len()];
                let mut dgamma = vec![0.0; feats];
                let mut dbeta = vec![0.0; feats];
                for r in 0..rows {
                    for f in 0..feats {
                        let o = (r * feats + f) * inner;
                        for i in o..o + inner {
                            dx[i] = g[i] * gm[f] * inv_std[f];
                            dgamma[f] += g[i] * (xv[i] - mean[f]) * inv_std[f];
                            dbeta[f] += g[i];
                        }
                    }
                }
                if self.rg(*x) {
                    accumulate(grads, *x, dx);
                }
                if self.rg(*gamma) {
                    accumulate(grads, *gamma, dgamma);
                }
                if self.rg(*beta) {
                    accumulate(grads, *beta, dbeta);
                }
            }
            Op::Relu(x) => {
                let dx = g
                    .iter()
                    .zip(self.val(*x))
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = g
                    .iter()
                    .zip(y)
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::Concat { parts } => {
                let rows = out_shape[0];
                let inner: usize = out_shape[2..].iter().product();
                let total = out_shape[1] * inner;
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1] * inner;
                    if self.rg(*p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(grads, *p, dp);
                    }
                    offset += w;
                }
            }
            Op::SliceCols { x, start } => {
                let s = self.shape(*x);
                let (rows, cols) = (s[0], s[1]);
                let w = out_shape[1];
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Scale(x, s) => accumulate(grads, *x, g.iter().map(|v| v * s).collect()),
            Op::Reshape(x) => accumulate(grads, *x, g.to_vec()),
            Op::GatherRows { x, idx } => {
                let xs = self.nodes[x.0].value.len();
                let w = node.value.row_len();
                let mut dx = vec![0.0; xs];
                for (i, &src) in idx.iter().enumerate() {
                    let d = &mut dx[src * w..(src + 1) * w];
                    d.iter_mut()
                        .zip(&g[i * w..(i + 1) * w])
                        .for_each(|(a, b)| *a += b);
                }
                accumulate(grads, *x, dx);
            }
            Op::ScatterRows { x, idx } => {
                let w = node.value.row_len();
                let mut dx = Vec::with_capacity(idx.len() * w);
                for &dst in idx {
                    dx.extend_from_slice(&g[dst * w..(dst + 1) * w]);
                }
                accumulate(grads, *x, dx);
            }
            Op::SumAll(x) => {
                let n = self.nodes[x.0].value.len();
                accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::BceRows { pred, target } => {
                let q = self.val(*pred);
                let w = self.nodes[pred.0].value.row_len().max(1) as f64;
                let rl = self.nodes[pred.0].value.row_len();
                let dx = q
                    .iter()
                    .zip(target)
                    .enumerate()
                    .map(|(i, (&qi, &pi))| {
                        if qi <= super::BCE_EPS || qi >= 1.0 - super::BCE_EPS {
                            0.0
                        } else {
                            g[i / rl.max(1)] * (qi - pi) / (qi * (1.0 - qi)) / w
                        }
                    })
                    .collect();
                accumulate(grads, *pred, dx);
            }
            Op::SqErrRows(a, b) => {
                let rl = self.nodes[a.0].value.row_len();
                let w = rl.max(1) as f64;
                let d: Vec<f64> = self
                    .val(*a)
                    .iter()
                    .zip(self.val(*b))
                    .enumerate()
                    .map(|(i, (x, y))| 2.0 * (x - y) / w * g[i / rl.max(1)])
                    .collect();
                if self.rg(*b) {
                    accumulate(grads, *b, d.iter().map(|v| -v).collect());
                }
                if self.rg(*a) {
                    accumulate(grads, *a, d);
                }
            }
            Op::WeightedSum { x, weights } => {
                accumulate(grads, *x, weights.iter().map(|w| w * g[0]).collect());
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(delta),
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b)
        | Op::AddBias(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::SqErrRows(a, b) => vec![*a, *b],
        Op::Conv2d { x, w, .. } | Op::TranspConv2d { x, w, .. } => vec![*x, *w],
        Op::BatchNorm { x, gamma, beta, .. } | Op::Affine { x, gamma, beta, .. } => {
            vec![*x, *gamma, *beta]
        }
        Op::Concat { parts } => parts.clone(),
        Op::MaxPool2 { x, .. }
        | Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::SliceCols { x, .. }
        | Op::Scale(x, _)
        | Op::Reshape(x)
        | Op::GatherRows { x, .. }
        | Op::ScatterRows { x, .. }
        | Op::SumAll(x)
        | Op::WeightedSum { x, .. } => vec![*x],
        Op::BceRows { pred, .. } => vec![*pred],
    }
}
