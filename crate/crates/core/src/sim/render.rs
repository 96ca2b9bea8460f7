//! Top-down orthographic rendering of a world into RGB, depth and
//! per-object masks.

use super::geometry::contains;
use super::shapes;
use super::world::WorldState;

pub const BACKGROUND: [f32; 3] = [0.82, 0.78, 0.7];
pub const PUSHER_COLOR: [f32; 3] = [0.25, 0.25, 0.25];
/// Heights are divided by this to give depth values in `[0, 1]`.
pub const DEPTH_SCALE: f64 = 1.0;

/// One rendered frame. Images are row-major with row 0 at `y = 0`; RGB is
/// interleaved per pixel and masks are stored object after object.
#[derive(Clone, Debug, PartialEq)]
pub struct Render {
    pub rgb: Vec<f32>,
    pub depth: Vec<f32>,
    pub masks: Vec<u8>,
}

/// World coordinates of the centre of pixel `(row, col)`.
pub fn pixel_center(world: &WorldState, w: usize, h: usize, row: usize, col: usize) -> [f64; 2] {
    let (sx, sy) = (world.container[0] / w as f64, world.container[1] / h as f64);
    [(col as f64 + 0.5) * sx, (row as f64 + 0.5) * sy]
}

/// Object indices in paint priority: taller first, ties by lower index.
pub fn occlusion_order(world: &WorldState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..world.objects.len()).collect();
    order.sort_by(|&a, &b| {
        world.objects[b]
            .height
            .total_cmp(&world.objects[a].height)
            .then(a.cmp(&b))
    });
    order
}

/// Rasterizes by sampling pixel centres. Each pixel belongs to at most one
/// object; the pusher is drawn only on otherwise empty floor so it never
/// hides an object.
pub fn render(world: &WorldState, w: usize, h: usize) -> Render {
    let n = world.objects.len();
    let polys: Vec<_> = world.objects.iter().map(|b| b.vertices()).collect();
    let order = occlusion_order(world);
    let mut out = Render {
        rgb: vec![0.0; w * h * 3],
        depth: vec![0.0; w * h],
        masks: vec![0; n * w * h],
    };
    let p = &world.pusher;
    for row in 0..h {
        for col in 0..w {
            let c = pixel_center(world, w, h, row, col);
            let px = row * w + col;
            let owner = order.iter().copied().find(|&i| contains(&polys[i], c));
            let (color, depth) = match owner {
                Some(i) => {
                    out.masks[i * w * h + px] = 1;
                    let b = &world.objects[i];
                    (shapes::color(b.shape), b.height / DEPTH_SCALE)
                }
                None if (c[0] - p.pos[0]).hypot(c[1] - p.pos[1]) <= p.radius => {
                    (PUSHER_COLOR, p.z / DEPTH_SCALE)
                }
                None => (BACKGROUND, 0.0),
            };
            out.rgb[px * 3..px * 3 + 3].copy_from_slice(&color);
            out.depth[px] = depth as f32;
        }
    }
    out
}
