//! Brute-force geometry checks, written without reusing library predicates.

use gridmesh::contour::ProjectedPoint;

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Lifted 4×4 determinant | x y x²+y² 1 | over (a, b, c, d), expanded along
/// the last column, divided by L⁴ (L = largest coordinate offset from d).
/// Positive when d is inside the circumcircle of counterclockwise (a, b, c).
pub fn incircle(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint, d: ProjectedPoint) -> f64 {
    // Translate so d is the origin; this keeps the expansion well scaled.
    let rows: Vec<[f64; 3]> = [a, b, c, d]
        .iter()
        .map(|p| {
            let (x, y) = (p.x - d.x, p.y - d.y);
            [x, y, x * x + y * y]
        })
        .collect();
    let minor = |skip: usize| {
        let r: Vec<[f64; 3]> = (0..4).filter(|&i| i != skip).map(|i| rows[i]).collect();
        det3([r[0], r[1], r[2]])
    };
    // Column of ones; cofactor signs for entries (i, 3) are (-1)^(i+3).
    let det = -minor(0) + minor(1) - minor(2) + minor(3);
    let l = [a, b, c]
        .iter()
        .map(|p| (p.x - d.x).abs().max((p.y - d.y).abs()))
        .fold(0.0, f64::max);
    det / l.powi(4)
}

pub fn signed_area(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint) -> f64 {
    0.5 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y))
}

/// Checks every output triangle against every input point. Returns a
/// description of the first violation.
pub fn check_delaunay(points: &[ProjectedPoint], tris: &[[usize; 3]], eps: f64) -> Result<(), String> {
    for (t, &[i, j, k]) in tris.iter().enumerate() {
        if i >= points.len() || j >= points.len() || k >= points.len() {
            return Err(format!("triangle {t} has an out-of-range vertex"));
        }
        let (a, b, c) = (points[i], points[j], points[k]);
        if signed_area(a, b, c) <= 0.0 {
            return Err(format!("triangle {t} is not counterclockwise / has zero area"));
        }
        for (m, &d) in points.iter().enumerate() {
            if m == i || m == j || m == k {
                continue;
            }
            let v = incircle(a, b, c, d);
            if v > eps {
                return Err(format!("point {m} inside circumcircle of triangle {t} ({v:e})"));
            }
        }
    }
    Ok(())
}

/// Area of the convex hull (Andrew's monotone chain).
pub fn hull_area(points: &[ProjectedPoint]) -> f64 {
    let mut p: Vec<(f64, f64)> = points.iter().map(|q| (q.x, q.y)).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

/// Barycentric weights by Cramer's rule on the 2×2 system.
pub fn weights(tri: [ProjectedPoint; 3], q: ProjectedPoint) -> [f64; 3] {
    let [a, b, c] = tri;
    let (e1x, e1y, e2x, e2y) = (b.x - a.x, b.y - a.y, c.x - a.x, c.y - a.y);
    let (qx, qy) = (q.x - a.x, q.y - a.y);
    let det = e1x * e2y - e2x * e1y;
    let u = (qx * e2y - e2x * qy) / det;
    let v = (e1x * qy - qx * e1y) / det;
    [1.0 - u - v, u, v]
}
