use super::delaunay::{orient2d, Triangulation};
use super::projection::ProjectedPoint;

/// Weights down to this (negative) value still count as inside, so points
/// on shared edges are never lost to rounding.
pub const BARYCENTRIC_TOLERANCE: f64 = -1e-12;

/// Barycentric weights of `q` in the triangle (a, b, c). Returns `None` for
/// a zero-area triangle.
pub fn barycentric(tri: [ProjectedPoint; 3], q: ProjectedPoint) -> Option<[f64; 3]> {
    let [a, b, c] = tri;
    let area = orient2d(a, b, c);
    if area == 0.0 {
        return None;
    }
    let wa = orient2d(q, b, c) / area;
    let wb = orient2d(a, q, c) / area;
    Some([wa, wb, 1.0 - wa - wb])
}

pub(crate) fn inside(w: &[f64; 3]) -> bool {
    w.iter().all(|&x| x >= BARYCENTRIC_TOLERANCE)
}

pub(crate) fn blend(w: &[f64; 3], idx: [usize; 3], values: &[f64]) -> f64 {
    w[0] * values[idx[0]] + w[1] * values[idx[1]] + w[2] * values[idx[2]]
}

/// Linear interpolation of per-vertex values at `q`, using the first
/// triangle (in list order) that contains it. `None` outside the hull.
pub fn interpolate(tri: &Triangulation, values: &[f64], q: ProjectedPoint) -> Option<f64> {
    assert_eq!(values.len(), tri.points().len(), "one value per vertex");
    for (t, &idx) in tri.triangles().iter().enumerate() {
        if let Some(w) = barycentric(tri.vertices(t), q) {
            if inside(&w) {
                return Some(blend(&w, idx, values));
            }
        }
    }
    None
}
