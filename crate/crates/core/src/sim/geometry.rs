//! Planar vector helpers and convex-polygon contact queries.

pub type V2 = [f64; 2];

#[inline]
pub fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: V2, s: f64) -> V2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: V2, b: V2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: V2) -> f64 {
    dot(a, a).sqrt()
}

pub fn rotate(a: V2, angle: f64) -> V2 {
    let (s, c) = angle.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

/// Signed area (positive for counter-clockwise winding).
pub fn signed_area(poly: &[V2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| cross(poly[i], poly[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Area centroid of a simple polygon.
pub fn centroid(poly: &[V2]) -> V2 {
    let n = poly.len();
    let a = signed_area(poly);
    let mut c = [0.0, 0.0];
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let k = cross(p, q);
        c[0] += (p[0] + q[0]) * k;
        c[1] += (p[1] + q[1]) * k;
    }
    scale(c, 1.0 / (6.0 * a))
}

/// True when every turn of the counter-clockwise polygon is a left turn.
pub fn is_convex_ccw(poly: &[V2]) -> bool {
    let n = poly.len();
    n >= 3
        && (0..n).all(|i| {
            let (a, b, c) = (poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
            cross(sub(b, a), sub(c, b)) > 0.0
        })
}

/// Point-in-polygon for a counter-clockwise convex polygon; boundary points
/// count as inside.
pub fn contains(poly: &[V2], p: V2) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(sub(poly[(i + 1) % n], poly[i]), sub(p, poly[i])) >= 0.0)
}

fn outward_normal(a: V2, b: V2) -> V2 {
    let e = sub(b, a);
    let l = norm(e);
    [e[1] / l, -e[0] / l]
}

fn extent(poly: &[V2], axis: V2) -> (f64, f64) {
    poly.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            let d = dot(p, axis);
            (lo.min(d), hi.max(d))
        })
}

/// Separating-axis query between two convex counter-clockwise polygons.
///
/// Returns `(separation, normal)` where the normal points from `a` towards
/// `b`. A negative separation is the penetration depth along the normal.
pub fn polygon_separation(a: &[V2], b: &[V2]) -> (f64, V2) {
    let mut best = (f64::NEG_INFINITY, [1.0, 0.0]);
    for (poly, flip) in [(a, false), (b, true)] {
        let n = poly.len();
        for i in 0..n {
            let axis = outward_normal(poly[i], poly[(i + 1) % n]);
            let (a_lo, a_hi) = extent(a, axis);
            let (b_lo, b_hi) = extent(b, axis);
            // axes from `b` point away from `b`, i.e. towards `a`
            let (sep, normal) = if flip {
                (a_lo - b_hi, scale(axis, -1.0))
            } else {
                (b_lo - a_hi, axis)
            };
            if sep > best.0 {
                best = (sep, normal);
            }
        }
    }
    best
}

/// Closest point on the boundary of a polygon to `p`.
fn closest_on_boundary(poly: &[V2], p: V2) -> V2 {
    let n = poly.len();
    let mut best = (f64::INFINITY, poly[0]);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = sub(b, a);
        let t = (dot(sub(p, a), e) / dot(e, e)).clamp(0.0, 1.0);
        let q = add(a, scale(e, t));
        let d = norm(sub(p, q));
        if d < best.0 {
            best = (d, q);
        }
    }
    best.1
}

/// Separation between a convex polygon and a disc; the normal points from the
/// polygon towards the disc centre.
pub fn disc_separation(poly: &[V2], center: V2, radius: f64) -> (f64, V2) {
    if contains(poly, center) {
        let n = poly.len();
        let mut best = (f64::NEG_INFINITY, [1.0, 0.0]);
        for i in 0..n {
            let axis = outward_normal(poly[i], poly[(i + 1) % n]);
            let d = dot(sub(center, poly[i]), axis);
            if d > best.0 {
                best = (d, axis);
            }
        }
        return (best.0 - radius, best.1);
    }
    let q = closest_on_boundary(poly, center);
    let d = sub(center, q);
    let l = norm(d);
    (l - radius, scale(d, 1.0 / l))
}
