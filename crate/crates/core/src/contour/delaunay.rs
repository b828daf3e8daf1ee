use std::collections::HashMap;

use thiserror::Error;

use super::projection::ProjectedPoint;

/// Tolerance on the normalized incircle determinant.
pub const DELAUNAY_EPS: f64 = 1e-9;

/// Points closer than this are treated as duplicates.
const DUPLICATE_DISTANCE: f64 = 1e-12;

/// Triangles whose normalized signed area is at or below this are dropped
/// as degenerate.
const DEGENERATE_AREA: f64 = 1e-14;

/// Multiplier for the super-triangle around the input bounding box.
const SUPER_SCALE: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulationError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("points are collinear; no triangle can be formed")]
    AllCollinear,
    #[error("point {0} is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    points: Vec<ProjectedPoint>,
    triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn points(&self) -> &[ProjectedPoint] {
        &self.points
    }

    /// Counterclockwise vertex-index triples.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertices(&self, t: usize) -> [ProjectedPoint; 3] {
        let [a, b, c] = self.triangles[t];
        [self.points[a], self.points[b], self.points[c]]
    }
}

/// Twice the signed area of (a, b, c); positive when counterclockwise.
pub fn orient2d(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn raw_incircle(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint, d: ProjectedPoint) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn spread(pts: &[ProjectedPoint]) -> f64 {
    let mut l: f64 = 0.0;
    for p in &pts[1..] {
        l = l.max((p.x - pts[0].x).abs()).max((p.y - pts[0].y).abs());
    }
    l
}

/// Incircle determinant of `d` against the counterclockwise triangle
/// (a, b, c), divided by L⁴ where L is the largest coordinate offset from
/// `d`. Positive means `d` is inside the circumcircle.
pub fn incircle_normalized(
    a: ProjectedPoint,
    b: ProjectedPoint,
    c: ProjectedPoint,
    d: ProjectedPoint,
) -> f64 {
    let l = spread(&[d, a, b, c]);
    if l == 0.0 {
        return 0.0;
    }
    raw_incircle(a, b, c, d) / (l * l * l * l)
}

fn orient_normalized(a: ProjectedPoint, b: ProjectedPoint, c: ProjectedPoint) -> f64 {
    let l = spread(&[a, b, c]);
    if l == 0.0 {
        return 0.0;
    }
    orient2d(a, b, c) / (l * l)
}

/// Triangles with directed-edge adjacency. Dead slots are `None`.
#[derive(Default)]
struct Mesh {
    tris: Vec<Option<[usize; 3]>>,
    edges: HashMap<(usize, usize), usize>,
}

fn tri_edges(t: [usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
}

impl Mesh {
    fn add(&mut self, t: [usize; 3]) {
        let id = self.tris.len();
        for e in tri_edges(t) {
            self.edges.insert(e, id);
        }
        self.tris.push(Some(t));
    }

    fn remove(&mut self, id: usize) {
        if let Some(t) = self.tris[id].take() {
            for e in tri_edges(t) {
                self.edges.remove(&e);
            }
        }
    }

    fn neighbor(&self, (u, v): (usize, usize)) -> Option<usize> {
        self.edges.get(&(v, u)).copied()
    }

    /// Triangle that contains `p` most convincingly: the largest smallest
    /// edge orientation. Always answers, even when rounding leaves `p`
    /// marginally outside every triangle.
    fn locate(&self, pts: &[ProjectedPoint], p: ProjectedPoint) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for (id, t) in self.tris.iter().enumerate() {
            let Some(t) = t else { continue };
            let score = tri_edges(*t)
                .iter()
                .map(|&(u, v)| orient_normalized(pts[u], pts[v], p))
                .fold(f64::INFINITY, f64::min);
            if score > best.0 {
                best = (score, id);
            }
        }
        best.1
    }

    /// Bowyer–Watson step for point `i`. The cavity grows from the
    /// containing triangle across edges into triangles whose circumcircle
    /// holds the point, then shrinks until every boundary edge faces the
    /// point, so the new fan can never overlap the rest of the mesh.
    fn insert(&mut self, pts: &[ProjectedPoint], i: usize) {
        let p = pts[i];
        let seed = self.locate(pts, p);
        let mut seeds = vec![seed];
        // A point on an edge of its triangle needs the triangle beyond too.
        for e in tri_edges(self.tris[seed].unwrap()) {
            if orient2d(pts[e.0], pts[e.1], p) <= 0.0 {
                if let Some(nb) = self.neighbor(e) {
                    seeds.push(nb);
                }
            }
        }
        let mut in_cavity: HashMap<usize, bool> = HashMap::new();
        let mut stack = seeds.clone();
        for &s in &seeds {
            in_cavity.insert(s, true);
        }
        while let Some(id) = stack.pop() {
            for e in tri_edges(self.tris[id].unwrap()) {
                if let Some(nb) = self.neighbor(e) {
                    if in_cavity.contains_key(&nb) {
                        continue;
                    }
                    let [a, b, c] = self.tris[nb].unwrap();
                    let bad = raw_incircle(pts[a], pts[b], pts[c], p) > 0.0;
                    in_cavity.insert(nb, bad);
                    if bad {
                        stack.push(nb);
                    }
                }
            }
        }
        let mut cavity: Vec<usize> = in_cavity.into_iter().filter(|&(_, b)| b).map(|(id, _)| id).collect();
        cavity.sort_unstable();

        loop {
            let set: std::collections::HashSet<usize> = cavity.iter().copied().collect();
            let hidden = cavity.iter().copied().find(|&id| {
                !seeds.contains(&id)
                    && tri_edges(self.tris[id].unwrap()).iter().any(|&e| {
                        let inside = self.neighbor(e).is_some_and(|nb| set.contains(&nb));
                        !inside && orient2d(pts[e.0], pts[e.1], p) <= 0.0
                    })
            });
            match hidden {
                Some(id) => {
                    cavity.retain(|&c| c != id);
                    // Keep only what is still connected to the seeds.
                    let set: std::collections::HashSet<usize> = cavity.iter().copied().collect();
                    let mut keep: std::collections::HashSet<usize> = seeds.iter().copied().collect();
                    let mut stack = seeds.clone();
                    while let Some(id) = stack.pop() {
                        for e in tri_edges(self.tris[id].unwrap()) {
                            if let Some(nb) = self.neighbor(e) {
                                if set.contains(&nb) && keep.insert(nb) {
                                    stack.push(nb);
                                }
                            }
                        }
                    }
                    cavity.retain(|c| keep.contains(c));
                }
                None => break,
            }
        }

        let set: std::collections::HashSet<usize> = cavity.iter().copied().collect();
        let mut boundary = Vec::new();
        for &id in &cavity {
            for e in tri_edges(self.tris[id].unwrap()) {
                if !self.neighbor(e).is_some_and(|nb| set.contains(&nb)) {
                    boundary.push(e);
                }
            }
        }
        for &id in &cavity {
            self.remove(id);
        }
        for (u, v) in boundary {
            // Degenerate slivers (p on the edge line) are skipped; the
            // neighbor across that edge was seeded into the cavity.
            if orient2d(pts[u], pts[v], p) > 0.0 {
                self.add([u, v, i]);
            }
        }
    }
}

fn check_input(points: &[ProjectedPoint]) -> Result<(), TriangulationError> {
    if let Some(i) = points.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(TriangulationError::NonFinite(i));
    }
    if points.len() < 3 {
        return Err(TriangulationError::TooFewPoints(points.len()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].x.total_cmp(&points[j].x).then(i.cmp(&j)));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > DUPLICATE_DISTANCE {
                break;
            }
            if points[i].distance(&points[j]) <= DUPLICATE_DISTANCE {
                return Err(TriangulationError::DuplicatePoint(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

/// Bowyer–Watson triangulation in input order, followed by a flip pass that
/// repairs any residual violations and settles cocircular quads on the
/// diagonal with the smallest vertex index.
pub fn delaunay(points: &[ProjectedPoint]) -> Result<Triangulation, TriangulationError> {
    check_input(points)?;
    let n = points.len();

    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let d = (max_x - min_x).max(max_y - min_y);
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let s = SUPER_SCALE * d;
    let mut all = points.to_vec();
    all.push(ProjectedPoint::new(cx - s, cy - s / 2.0));
    all.push(ProjectedPoint::new(cx + s, cy - s / 2.0));
    all.push(ProjectedPoint::new(cx, cy + s));

    let mut mesh = Mesh::default();
    mesh.add([n, n + 1, n + 2]);
    for i in 0..n {
        mesh.insert(&all, i);
    }
    let mut tris: Vec<[usize; 3]> = mesh.tris.into_iter().flatten().collect();

    tris.retain(|t| t.iter().all(|&v| v < n));
    all.truncate(n);
    tris.retain(|&[a, b, c]| orient_normalized(all[a], all[b], all[c]) > DEGENERATE_AREA);
    if tris.is_empty() {
        return Err(TriangulationError::AllCollinear);
    }
    fill_hull(&all, &mut tris);
    legalize(&all, &mut tris);
    Ok(Triangulation { points: all, triangles: tris })
}

/// Triangles touching the super-triangle can take thin hull triangles with
/// them when they are removed. Close every concave boundary corner with an
/// ear until the outline is convex; the flip pass then restores the
/// empty-circumcircle property.
fn fill_hull(pts: &[ProjectedPoint], tris: &mut Vec<[usize; 3]>) {
    loop {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in tris.iter() {
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((u.min(v), u.max(v))).or_default() += 1;
            }
        }
        // Boundary edges keep the direction they have in their triangle,
        // so the interior lies to their left.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for t in tris.iter() {
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if count[&(u.min(v), u.max(v))] == 1 && next.insert(u, v).is_some() {
                    // A vertex pinched between two boundary loops: leave it.
                    return;
                }
            }
        }
        let Some(&start) = next.keys().min() else { return };
        let mut loop_vs = vec![start];
        let mut v = next[&start];
        while v != start {
            if loop_vs.len() > next.len() {
                return;
            }
            loop_vs.push(v);
            v = match next.get(&v) {
                Some(&w) => w,
                None => return,
            };
        }
        let m = loop_vs.len();
        let mut used = vec![false; m];
        let mut added = false;
        for i in 0..m {
            let (iu, iw) = ((i + m - 1) % m, (i + 1) % m);
            if used[iu] || used[i] || used[iw] {
                continue;
            }
            let (u, v, w) = (loop_vs[iu], loop_vs[i], loop_vs[iw]);
            if orient_normalized(pts[u], pts[v], pts[w]) >= -DEGENERATE_AREA {
                continue;
            }
            let ear = [u, w, v];
            let blocked = loop_vs.iter().any(|&x| {
                x != u && x != v && x != w && {
                    let (a, b, c) = (pts[ear[0]], pts[ear[1]], pts[ear[2]]);
                    orient2d(a, b, pts[x]) >= 0.0 && orient2d(b, c, pts[x]) >= 0.0 && orient2d(c, a, pts[x]) >= 0.0
                }
            });
            if blocked {
                continue;
            }
            tris.push(ear);
            used[iu] = true;
            used[i] = true;
            used[iw] = true;
            added = true;
        }
        if !added {
            return;
        }
    }
}

fn rotate_to(t: [usize; 3], first: usize) -> [usize; 3] {
    if t[0] == first {
        t
    } else if t[1] == first {
        [t[1], t[2], t[0]]
    } else {
        [t[2], t[0], t[1]]
    }
}

fn legalize(pts: &[ProjectedPoint], tris: &mut [[usize; 3]]) {
    // Generous bound; Lawson flips terminate well before this in practice.
    let max_passes = 4 * tris.len() + 16;
    for _ in 0..max_passes {
        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.entry((u.min(v), u.max(v))).or_default().push(ti);
            }
        }
        let mut keys: Vec<(usize, usize)> =
            edges.iter().filter(|(_, ts)| ts.len() == 2).map(|(k, _)| *k).collect();
        keys.sort_unstable();

        let mut touched = vec![false; tris.len()];
        let mut flipped = false;
        for (a, b) in keys {
            let (p, q) = (edges[&(a, b)][0], edges[&(a, b)][1]);
            if touched[p] || touched[q] {
                continue;
            }
            // Orient so t1 = (a, b, c) and t2 = (b, a, e), both counterclockwise.
            let (t1, t2) = if rotate_to(tris[p], a)[1] == b { (p, q) } else { (q, p) };
            let c = rotate_to(tris[t1], a)[2];
            let e = rotate_to(tris[t2], b)[2];

            let inc = incircle_normalized(pts[a], pts[b], pts[c], pts[e]);
            let want = if inc > DELAUNAY_EPS {
                true
            } else if inc >= -DELAUNAY_EPS {
                c.min(e) < a.min(b)
            } else {
                false
            };
            if !want {
                continue;
            }
            // Both new triangles must be proper and counterclockwise.
            let n1 = [c, a, e];
            let n2 = [e, b, c];
            if orient_normalized(pts[n1[0]], pts[n1[1]], pts[n1[2]]) <= DEGENERATE_AREA
                || orient_normalized(pts[n2[0]], pts[n2[1]], pts[n2[2]]) <= DEGENERATE_AREA
            {
                continue;
            }
            tris[t1] = n1;
            tris[t2] = n2;
            touched[t1] = true;
            touched[t2] = true;
            flipped = true;
        }
        if !flipped {
            return;
        }
    }
}
