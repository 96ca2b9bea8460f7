//! The shape library: eight irregular convex prisms. Ids 0..3 are the
//! familiar shapes of the training set, ids 3..8 are held out as novel.

use super::geometry::{centroid, signed_area, sub, V2};

pub const LIBRARY_SIZE: usize = 8;
pub const KNOWN: [usize; 3] = [0, 1, 2];
pub const NOVEL: [usize; 5] = [3, 4, 5, 6, 7];

const OUTLINES: [&[V2]; LIBRARY_SIZE] = [
    &[
        [-0.55, -0.35],
        [0.5, -0.4],
        [0.6, 0.25],
        [-0.2, 0.45],
        [-0.6, 0.1],
    ],
    &[[-0.6, -0.4], [0.65, -0.3], [-0.1, 0.55]],
    &[[-0.45, -0.45], [0.45, -0.45], [0.45, 0.15], [-0.45, 0.45]],
    &[
        [-0.5, -0.2],
        [-0.15, -0.5],
        [0.4, -0.4],
        [0.6, 0.05],
        [0.3, 0.45],
        [-0.35, 0.35],
    ],
    &[[-0.65, -0.3], [0.35, -0.3], [0.65, 0.32], [-0.3, 0.28]],
    &[[0.0, -0.6], [0.4, -0.05], [0.0, 0.35], [-0.3, -0.1]],
    &[
        [-0.4, -0.5],
        [0.5, -0.3],
        [0.45, 0.3],
        [-0.1, 0.55],
        [-0.55, 0.05],
    ],
    &[[-0.6, -0.2], [0.1, -0.55], [0.55, 0.2], [-0.2, 0.5]],
];

const HEIGHTS: [f64; LIBRARY_SIZE] = [0.5, 0.7, 0.4, 0.6, 0.8, 0.45, 0.65, 0.55];

const COLORS: [[f32; 3]; LIBRARY_SIZE] = [
    [0.85, 0.2, 0.2],
    [0.2, 0.6, 0.9],
    [0.95, 0.8, 0.1],
    [0.3, 0.75, 0.3],
    [0.6, 0.3, 0.8],
    [0.95, 0.5, 0.1],
    [0.1, 0.8, 0.75],
    [0.9, 0.4, 0.7],
];

/// Outline of shape `id` scaled by `size`, counter-clockwise and centred on
/// its area centroid.
pub fn outline(id: usize, size: f64) -> Vec<V2> {
    let raw = OUTLINES[id];
    let c = centroid(raw);
    raw.iter()
        .map(|&p| {
            let d = sub(p, c);
            [d[0] * size, d[1] * size]
        })
        .collect()
}

pub fn height(id: usize) -> f64 {
    HEIGHTS[id]
}

pub fn color(id: usize) -> [f32; 3] {
    COLORS[id]
}

/// Largest vertex distance from the centroid at the given size.
pub fn radius(id: usize, size: f64) -> f64 {
    outline(id, size)
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max)
}

pub fn area(id: usize, size: f64) -> f64 {
    signed_area(&outline(id, size))
}
