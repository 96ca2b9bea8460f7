//! Raw numeric kernels on flat row-major buffers.

use crate::par;

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `m x k` and
/// `op(b)` is `k x n`, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // row-major buffers whose lengths are asserted on entry.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Kernel, stride and zero padding of a 2-D (transposed) convolution.
/// `h` is the row (y) axis, `w` the column (x) axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
}

impl ConvGeom {
    pub fn square(k: usize, s: usize, p: usize) -> Self {
        ConvGeom {
            kh: k,
            kw: k,
            sh: s,
            sw: s,
            ph: p,
            pw: p,
        }
    }

    /// Output extents of the forward convolution, `None` when nonpositive.
    pub fn conv_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = (h + 2 * self.ph).checked_sub(self.kh)? / self.sh + 1;
        let ow = (w + 2 * self.pw).checked_sub(self.kw)? / self.sw + 1;
        Some((oh, ow))
    }

    /// Output extents of the transposed convolution, `None` when nonpositive.
    pub fn transp_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h == 0 || w == 0 {
            return None;
        }
        let oh = ((h - 1) * self.sh + self.kh).checked_sub(2 * self.ph)?;
        let ow = ((w - 1) * self.sw + self.kw).checked_sub(2 * self.pw)?;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    fn valid(&self) -> bool {
        self.kh >= 1 && self.kw >= 1 && self.sh >= 1 && self.sw >= 1
    }
}

/// Unfolds one `c x h x w` image into `cols[c*kh*kw, oh*ow]`.
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let hw = oh * ow;
    for ch in 0..c {
        let img = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oi in 0..oh {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    let out_row = &mut dst[oi * ow..(oi + 1) * ow];
                    if ii < 0 || ii >= h as isize {
                        out_row.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &img[ii as usize * w..(ii as usize + 1) * w];
                    for (oj, v) in out_row.iter_mut().enumerate() {
                        let jj = (oj * g.sw + kj) as isize - g.pw as isize;
                        *v = if jj < 0 || jj >= w as isize {
                            0.0
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into the image `x`.
fn col2im(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
    x: &mut [f64],
) {
    let hw = oh * ow;
    for ch in 0..c {
        let img = &mut x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oi in 0..oh {
                    let ii = (oi * g.sh + ki) as isize - g.ph as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst = &mut img[ii as usize * w..(ii as usize + 1) * w];
                    for oj in 0..ow {
                        let jj = (oj * g.sw + kj) as isize - g.pw as isize;
                        if jj >= 0 && jj < w as isize {
                            dst[jj as usize] += src[oi * ow + oj];
                        }
                    }
                }
            }
        }
    }
}

/// Dimensions of a batched image tensor `[b, c, h, w]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims4 {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub fn from_shape(s: &[usize]) -> Option<Self> {
        match *s {
            [b, c, h, w] => Some(Dims4 { b, c, h, w }),
            _ => None,
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Cross-correlation `y[b] = W * im2col(x[b])`, weight `[o, c, kh, kw]`.
pub(crate) fn conv2d_forward(
    x: &[f64],
    xd: Dims4,
    wt: &[f64],
    o: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    debug_assert!(g.valid());
    let ckk = xd.c * g.kh * g.kw;
    let ohw = oh * ow;
    let mut y = vec![0.0; xd.b * o * ohw];
    par::for_each_chunk_mut(&mut y, o * ohw, |b, yb| {
        let mut cols = vec![0.0; ckk * ohw];
        im2col(
            &x[b * xd.sample()..(b + 1) * xd.sample()],
            xd.c,
            xd.h,
            xd.w,
            g,
            oh,
            ow,
            &mut cols,
        );
        gemm(o, ckk, ohw, 1.0, wt, false, &cols, false, 0.0, yb);
    });
    y
}

/// Gradients of [`conv2d_forward`] with respect to input and weight.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    xd: Dims4,
    wt: &[f64],
    o: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
    dy: &[f64],
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let ckk = xd.c * g.kh * g.kw;
    let ohw = oh * ow;
    let per_sample = par::map(xd.b, |b| {
        let mut cols = vec![0.0; ckk * ohw];
        im2col(
            &x[b * xd.sample()..(b + 1) * xd.sample()],
            xd.c,
            xd.h,
            xd.w,
            g,
            oh,
            ow,
            &mut cols,
        );
        let dyb = &dy[b * o * ohw..(b + 1) * o * ohw];
        let mut dw = vec![0.0; o * ckk];
        gemm(o, ohw, ckk, 1.0, dyb, false, &cols, true, 0.0, &mut dw);
        let dx = need_dx.then(|| {
            gemm(ckk, o, ohw, 1.0, wt, true, dyb, false, 0.0, &mut cols);
            let mut dxb = vec![0.0; xd.sample()];
            col2im(&cols, xd.c, xd.h, xd.w, g, oh, ow, &mut dxb);
            dxb
        });
        (dx, dw)
    });
    let mut dw = vec![0.0; o * ckk];
    let mut dx = need_dx.then(|| Vec::with_capacity(x.len()));
    for (dxb, dwb) in per_sample {
        dw.iter_mut().zip(&dwb).for_each(|(a, b)| *a += b);
        if let (Some(dx), Some(dxb)) = (dx.as_mut(), dxb) {
            dx.extend_from_slice(&dxb);
        }
    }
    (dx, dw)
}

/// Transposed convolution (adjoint of conv2d), weight `[c, o, kh, kw]`;
/// output is `[b, o, oh, ow]`.
pub(crate) fn transp_forward(
    x: &[f64],
    xd: Dims4,
    wt: &[f64],
    o: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let okk = o * g.kh * g.kw;
    let hw = xd.plane();
    let out_sample = o * oh * ow;
    let mut y = vec![0.0; xd.b * out_sample];
    par::for_each_chunk_mut(&mut y, out_sample, |b, yb| {
        let mut cols = vec![0.0; okk * hw];
        let xb = &x[b * xd.sample()..(b + 1) * xd.sample()];
        gemm(okk, xd.c, hw, 1.0, wt, true, xb, false, 0.0, &mut cols);
        col2im(&cols, o, oh, ow, g, xd.h, xd.w, yb);
    });
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn transp_backward(
    x: &[f64],
    xd: Dims4,
    wt: &[f64],
    o: usize,
    g: &ConvGeom,
    oh: usize,
    ow: usize,
    dy: &[f64],
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let okk = o * g.kh * g.kw;
    let hw = xd.plane();
    let out_sample = o * oh * ow;
    let per_sample = par::map(xd.b, |b| {
        let mut cols = vec![0.0; okk * hw];
        im2col(
            &dy[b * out_sample..(b + 1) * out_sample],
            o,
            oh,
            ow,
            g,
            xd.h,
            xd.w,
            &mut cols,
        );
        let xb = &x[b * xd.sample()..(b + 1) * xd.sample()];
        let mut dw = vec![0.0; xd.c * okk];
        gemm(xd.c, hw, okk, 1.0, xb, false, &cols, true, 0.0, &mut dw);
        let dx = need_dx.then(|| {
            let mut dxb = vec![0.0; xd.sample()];
            gemm(xd.c, okk, hw, 1.0, wt, false, &cols, false, 0.0, &mut dxb);
            dxb
        });
        (dx, dw)
    });
    let mut dw = vec![0.0; xd.c * okk];
    let mut dx = need_dx.then(|| Vec::with_capacity(x.len()));
    for (dxb, dwb) in per_sample {
        dw.iter_mut().zip(&dwb).for_each(|(a, b)| *a += b);
        if let (Some(dx), Some(dxb)) = (dx.as_mut(), dxb) {
            dx.extend_from_slice(&dxb);
        }
    }
    (dx, dw)
}

/// 2x2 stride-2 max pooling. Odd extents behave as if the last row/column
/// were replicated. Returns values and the flat argmax per output cell;
/// ties resolve to the first cell in row-major order.
pub(crate) fn maxpool2_forward(x: &[f64], xd: Dims4) -> (Vec<f64>, Vec<usize>, usize, usize) {
    let oh = xd.h.div_ceil(2);
    let ow = xd.w.div_ceil(2);
    let planes = xd.b * xd.c;
    let mut y = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * xd.plane();
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for di in 0..2 {
                    let r = 2 * i + di;
                    if r >= xd.h {
                        continue;
                    }
                    for dj in 0..2 {
                        let c = 2 * j + dj;
                        if c >= xd.w {
                            continue;
                        }
                        let idx = base + r * xd.w + c;
                        if x[idx] > best || best_idx == usize::MAX {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                y.push(best);
                arg.push(best_idx);
            }
        }
    }
    (y, arg, oh, ow)
}

/// Per-feature statistics for batch normalization over axis 1.
/// Returns `(mean, biased variance)`.
pub(crate) fn feature_moments(
    x: &[f64],
    rows: usize,
    feats: usize,
    inner: usize,
) -> (Vec<f64>, Vec<f64>) {
    let m = (rows * inner) as f64;
    let mut mean = vec![0.0; feats];
    let mut var = vec![0.0; feats];
    for r in 0..rows {
        for (f, mu) in mean.iter_mut().enumerate() {
            let s = &x[(r * feats + f) * inner..(r * feats + f + 1) * inner];
            *mu += s.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for r in 0..rows {
        for f in 0..feats {
            let s = &x[(r * feats + f) * inner..(r * feats + f + 1) * inner];
            var[f] += s.iter().map(|v| (v - mean[f]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    (mean, var)
}
