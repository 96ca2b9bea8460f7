//! Conversions from recorded frames to per-object network inputs.

use crate::sim::Frame;
use crate::tensor::Hw;

use super::ModelVariant;

/// Stacked per-object input `[channels, h, w]`, channel-major: RGB, object
/// mask, depth (mask only for the variant without RGB-D). A `mask`
/// override replaces the recorded mask, e.g. with a predicted one.
pub fn object_visual(
    frame: &Frame,
    i: usize,
    w: usize,
    h: usize,
    variant: ModelVariant,
    mask: Option<&[f64]>,
) -> Vec<f64> {
    let px = w * h;
    let recorded = &frame.masks[i * px..(i + 1) * px];
    let mut out = Vec::with_capacity(variant.channels() * px);
    let push_mask = |out: &mut Vec<f64>| match mask {
        Some(m) => out.extend_from_slice(m),
        None => out.extend(recorded.iter().map(|&m| f64::from(m))),
    };
    if variant.channels() == 1 {
        push_mask(&mut out);
        return out;
    }
    for c in 0..3 {
        out.extend(frame.rgb.iter().skip(c).step_by(3).map(|&v| f64::from(v)));
    }
    push_mask(&mut out);
    out.extend(frame.depth.iter().map(|&v| f64::from(v)));
    out
}

/// Position followed by velocity of object `i`.
pub fn pose(frame: &Frame, i: usize) -> [f64; 6] {
    let (p, v) = (frame.pos[i], frame.vel[i]);
    [p[0], p[1], p[2], v[0], v[1], v[2]].map(f64::from)
}

/// Pose edge attribute of sender `i`: velocity now, previous position,
/// position now.
pub fn pose_edge(prev: &Frame, cur: &Frame, i: usize) -> [f64; 9] {
    let (v, p0, p1) = (cur.vel[i], prev.pos[i], cur.pos[i]);
    [v[0], v[1], v[2], p0[0], p0[1], p0[2], p1[0], p1[1], p1[2]].map(f64::from)
}

/// Row weights of an area-averaging resampler from `src` to `dst` cells.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let (lo, hi) = (d as f64 * scale, (d + 1) as f64 * scale);
            (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .filter_map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged resampling of a row-major `src` map to `dst`; values stay
/// in `[0, 1]` for binary input.
pub fn downsample(map: &[f64], src: Hw, dst: Hw) -> Vec<f64> {
    let (wr, wc) = (area_weights(src.h, dst.h), area_weights(src.w, dst.w));
    let mut out = Vec::with_capacity(dst.h * dst.w);
    for rows in &wr {
        for cols in &wc {
            let mut acc = 0.0;
            for &(r, a) in rows {
                for &(c, b) in cols {
                    acc += a * b * map[r * src.w + c];
                }
            }
            out.push(acc);
        }
    }
    out
}
