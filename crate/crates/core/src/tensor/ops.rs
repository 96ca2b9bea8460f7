//! Forward constructors for every primitive, each recording its pullback.

use super::kernels::{self, ConvGeom, Dims4};
use super::tape::{Op, Tape, Var};
use super::{Tensor, BCE_EPS, BN_EPS};
use crate::error::{Error, Result};

impl Tape {
    /// `x[m,k] @ w[k,n]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(Error::shape("matmul", sx, sw));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            m,
            k,
            n,
            1.0,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            0.0,
            &mut out,
        );
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(x, w)))
    }

    /// Adds `b[f]` to every element of feature `f` (axis 1).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() < 2 || sb != [sx[1]] {
            return Err(Error::shape("add_bias", sx, sb));
        }
        let feats = sx[1];
        let inner: usize = sx[2..].iter().product();
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for (i, chunk) in out.chunks_mut(inner.max(1)).enumerate() {
            let bv = bias[i % feats];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
        let t = Tensor::new(sx.to_vec(), out)?;
        Ok(self.push(t, Op::AddBias(x, b)))
    }

    /// Fully connected layer `y = xW + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Cross-correlation of `x[b,c,h,w]` with `w[o,c,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let xd = Dims4::from_shape(&sx)
            .ok_or_else(|| Error::invalid("conv2d", format!("input must be rank 4, got {sx:?}")))?;
        if sw.len() != 4 || sw[1] != xd.c || sw[2] != geom.kh || sw[3] != geom.kw {
            return Err(Error::shape("conv2d", &sx, &sw));
        }
        let (oh, ow) = geom.conv_out(xd.h, xd.w).ok_or_else(|| {
            Error::invalid(
                "conv2d",
                format!("nonpositive output extent for input {sx:?} and {geom:?}"),
            )
        })?;
        let o = sw[0];
        let y = kernels::conv2d_forward(
            self.value(x).data(),
            xd,
            self.value(w).data(),
            o,
            &geom,
            oh,
            ow,
        );
        let t = Tensor::new(vec![xd.b, o, oh, ow], y)?;
        Ok(self.push(t, Op::Conv2d { x, w, geom }))
    }

    /// Transposed convolution of `x[b,c,h,w]` with `w[c,o,kh,kw]`.
    pub fn transp_conv2d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let xd = Dims4::from_shape(&sx).ok_or_else(|| {
            Error::invalid("transp_conv2d", format!("input must be rank 4, got {sx:?}"))
        })?;
        if sw.len() != 4 || sw[0] != xd.c || sw[2] != geom.kh || sw[3] != geom.kw {
            return Err(Error::shape("transp_conv2d", &sx, &sw));
        }
        let (oh, ow) = geom.transp_out(xd.h, xd.w).ok_or_else(|| {
            Error::invalid(
                "transp_conv2d",
                format!("nonpositive output extent for input {sx:?} and {geom:?}"),
            )
        })?;
        let o = sw[1];
        let y = kernels::transp_forward(
            self.value(x).data(),
            xd,
            self.value(w).data(),
            o,
            &geom,
            oh,
            ow,
        );
        let t = Tensor::new(vec![xd.b, o, oh, ow], y)?;
        Ok(self.push(t, Op::TranspConv2d { x, w, geom }))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let xd = Dims4::from_shape(&sx).ok_or_else(|| {
            Error::invalid("maxpool2", format!("input must be rank 4, got {sx:?}"))
        })?;
        let (y, argmax, oh, ow) = kernels::maxpool2_forward(self.value(x).data(), xd);
        let t = Tensor::new(vec![xd.b, xd.c, oh, ow], y)?;
        Ok(self.push(t, Op::MaxPool2 { x, argmax }))
    }

    /// Batch normalization with batch statistics over every axis except 1.
    /// Returns the output and the batch `(mean, variance)` so callers can
    /// update running averages.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 {
            return Err(Error::invalid(
                "batch_norm",
                format!("needs rank >= 2, got {sx:?}"),
            ));
        }
        if sx[0] < 2 {
            return Err(Error::BatchTooSmall(sx[0]));
        }
        let (rows, feats) = (sx[0], sx[1]);
        self.check_affine_params("batch_norm", feats, gamma, beta)?;
        let inner: usize = sx[2..].iter().product();
        let xv = self.value(x).data();
        let (mean, var) = kernels::feature_moments(xv, rows, feats, inner);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for r in 0..rows {
            for f in 0..feats {
                let o = (r * feats + f) * inner;
                for i in o..o + inner {
                    xhat[i] = (xv[i] - mean[f]) * inv_std[f];
                    y[i] = gm[f] * xhat[i] + bt[f];
                }
            }
        }
        let t = Tensor::new(sx, y)?;
        let v = self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        Ok((v, mean, var))
    }

    /// Batch normalization with fixed statistics (evaluation mode).
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 {
            return Err(Error::invalid(
                "batch_norm",
                format!("needs rank >= 2, got {sx:?}"),
            ));
        }
        let (rows, feats) = (sx[0], sx[1]);
        self.check_affine_params("batch_norm", feats, gamma, beta)?;
        if mean.len() != feats || var.len() != feats {
            return Err(Error::shape("batch_norm", &[feats], &[mean.len()]));
        }
        let inner: usize = sx[2..].iter().product();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let xv = self.value(x).data();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut y = vec![0.0; xv.len()];
        for r in 0..rows {
            for f in 0..feats {
                let o = (r * feats + f) * inner;
                for i in o..o + inner {
                    y[i] = gm[f] * (xv[i] - mean[f]) * inv_std[f] + bt[f];
                }
            }
        }
        let t = Tensor::new(sx, y)?;
        Ok(self.push(
            t,
            Op::Affine {
                x,
                gamma,
                beta,
                mean: mean.to_vec(),
                inv_std,
            },
        ))
    }

    fn check_affine_params(
        &self,
        op: &'static str,
        feats: usize,
        gamma: Var,
        beta: Var,
    ) -> Result<()> {
        if self.shape(gamma) != [feats] || self.shape(beta) != [feats] {
            return Err(Error::shape(op, &[feats], self.shape(gamma)));
        }
        Ok(())
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.max(0.0));
        self.push(t, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(t, Op::Sigmoid(x))
    }

    /// Concatenates along axis 1; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat", "no inputs"));
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() < 2 {
            return Err(Error::invalid(
                "concat",
                format!("needs rank >= 2, got {s0:?}"),
            ));
        }
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != s0.len() || s[0] != s0[0] || s[2..] != s0[2..] {
                return Err(Error::shape("concat", &s0, s));
            }
            width += s[1];
        }
        let rows = s0[0];
        let inner: usize = s0[2..].iter().product();
        let mut out = Vec::with_capacity(rows * width * inner);
        for r in 0..rows {
            for &p in parts {
                let w = self.shape(p)[1] * inner;
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = s0;
        shape[1] = width;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::invalid(
                "slice_cols",
                format!("columns {start}..{} of {s:?}", start + len),
            ));
        }
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * len);
        for r in 0..s[0] {
            out.extend_from_slice(&data[r * s[1] + start..r * s[1] + start + len]);
        }
        let t = Tensor::new(vec![s[0], len], out)?;
        Ok(self.push(t, Op::SliceCols { x, start }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(t, op))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// `out[i] = x[idx[i]]` along the leading axis.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let rows = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("index {bad} out of {rows} rows"),
            ));
        }
        let t = self.value(x).select_rows(idx);
        Ok(self.push(
            t,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
        ))
    }

    /// `out[idx[i]] += x[i]`, producing `n` rows; rows no index points to are zero.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != idx.len() || xv.rank() < 1 {
            return Err(Error::invalid(
                "scatter_add_rows",
                format!("{} rows vs {} indices", xv.rows(), idx.len()),
            ));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(
                "scatter_add_rows",
                format!("index {bad} out of {n} rows"),
            ));
        }
        let w = xv.row_len();
        let mut out = vec![0.0; n * w];
        for (i, &dst) in idx.iter().enumerate() {
            out[dst * w..(dst + 1) * w]
                .iter_mut()
                .zip(xv.row(i))
                .for_each(|(a, b)| *a += b);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = n;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::ScatterRows {
                x,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// Per-row mean binary cross-entropy `-p ln q - (1-p) ln(1-q)` with
    /// `q` clamped to `[eps, 1-eps]`. Output shape `[rows]`.
    pub fn bce_rows(&mut self, target: &Tensor, pred: Var) -> Result<Var> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::shape("bce", target.shape(), pv.shape()));
        }
        if let Some(bad) = target.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain {
                op: "bce",
                msg: format!("target value {bad} outside [0, 1]"),
            });
        }
        let rows = pv.rows();
        let rl = pv.row_len();
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let q = &pv.data()[r * rl..(r + 1) * rl];
            let p = &target.data()[r * rl..(r + 1) * rl];
            let s: f64 = q.iter().zip(p).map(|(&q, &p)| bce_scalar(p, q)).sum();
            *o = if rl == 0 { 0.0 } else { s / rl as f64 };
        }
        let t = Tensor::new(vec![rows], out)?;
        Ok(self.push(
            t,
            Op::BceRows {
                pred,
                target: target.data().to_vec(),
            },
        ))
    }

    /// Per-row mean squared difference. Output shape `[rows]`.
    pub fn sq_err_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("mse", va.shape(), vb.shape()));
        }
        let rows = va.rows();
        let rl = va.row_len();
        let out = (0..rows)
            .map(|r| {
                let s: f64 = va
                    .row(r)
                    .iter()
                    .zip(vb.row(r))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum();
                if rl == 0 {
                    0.0
                } else {
                    s / rl as f64
                }
            })
            .collect();
        let t = Tensor::new(vec![rows], out)?;
        Ok(self.push(t, Op::SqErrRows(a, b)))
    }

    /// `sum_i w_i x_i` over a flat view of `x`.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != weights.len() {
            return Err(Error::shape("weighted_sum", xv.shape(), &[weights.len()]));
        }
        let s = xv.data().iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
        ))
    }

    /// Mean binary cross-entropy over all elements.
    pub fn bce_loss(&mut self, target: &Tensor, pred: Var) -> Result<Var> {
        let n = self.value(pred).len();
        let flat = self.reshape(pred, &[1, n])?;
        let t = target.clone().reshape(&[1, n])?;
        let rows = self.bce_rows(&t, flat)?;
        self.weighted_sum(rows, &[1.0])
    }

    /// Mean squared difference over all elements.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(Error::shape("mse", &sa, &sb));
        }
        let n = self.value(a).len();
        let fa = self.reshape(a, &[1, n])?;
        let fb = self.reshape(b, &[1, n])?;
        let rows = self.sq_err_rows(fa, fb)?;
        self.weighted_sum(rows, &[1.0])
    }
}

/// Binary cross-entropy of one target/prediction pair with the prediction
/// clamped to `[eps, 1-eps]`.
pub fn bce_scalar(p: f64, q: f64) -> f64 {
    let q = q.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -p * q.ln() - (1.0 - p) * (1.0 - q).ln()
}
