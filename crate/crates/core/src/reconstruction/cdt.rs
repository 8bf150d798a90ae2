//! Constrained Delaunay triangulation of polygons with holes.
//!
//! Bowyer–Watson insertion inside a super-triangle, constraint recovery by
//! cavity re-triangulation, parity flood fill to drop the exterior and
//! holes, and a final Lawson pass over unconstrained edges. All predicates
//! are exact. No Steiner points are added except where two constraints cross.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::geometry::{incircle, orient2d, point_in_polygon, segments_intersect, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdtError {
    #[error("polygon needs at least 3 distinct vertices")]
    Degenerate,
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("constraint {0} lies outside the polygon")]
    ConstraintOutside(usize),
    #[error("constraint recovery failed for segment {0}-{1}")]
    Recovery(usize, usize),
}

/// Output triangulation. `points` extends the input with any constraint
/// crossing points; triangles are counter-clockwise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cdt {
    pub points: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    /// Constrained sub-edges (smaller index first), boundary and interior.
    pub constrained: BTreeSet<(usize, usize)>,
}

impl Cdt {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.points[i]);
                0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
            })
            .sum()
    }

    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                out.insert(ordered(t[k], t[(k + 1) % 3]));
            }
        }
        out
    }
}

#[inline]
fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [usize; 3],
    /// Neighbor across the edge opposite `v[k]`.
    n: [usize; 3],
}

struct Mesh {
    pts: Vec<Vec2>,
    tris: Vec<Tri>,
}

impl Mesh {
    fn rebuild_adjacency(&mut self) {
        let mut map: HashMap<(usize, usize), (usize, usize)> =
            HashMap::with_capacity(self.tris.len() * 2);
        for t in self.tris.iter_mut() {
            t.n = [NONE; 3];
        }
        for ti in 0..self.tris.len() {
            let v = self.tris[ti].v;
            for k in 0..3 {
                let e = ordered(v[(k + 1) % 3], v[(k + 2) % 3]);
                if let Some((tj, kj)) = map.remove(&e) {
                    self.tris[ti].n[k] = tj;
                    self.tris[tj].n[kj] = ti;
                } else {
                    map.insert(e, (ti, k));
                }
            }
        }
    }

    fn contains(&self, t: usize, p: Vec2) -> bool {
        let [a, b, c] = self.tris[t].v.map(|i| self.pts[i]);
        orient2d(a, b, p) >= 0.0 && orient2d(b, c, p) >= 0.0 && orient2d(c, a, p) >= 0.0
    }

    fn in_circumcircle(&self, t: usize, p: Vec2) -> bool {
        let [a, b, c] = self.tris[t].v.map(|i| self.pts[i]);
        incircle(a, b, c, p) > 0.0
    }

    /// Bowyer–Watson insertion of point `pi` (already in `pts`).
    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let Some(start) = (0..self.tris.len()).find(|&t| self.contains(t, p)) else {
            return;
        };
        let mut bad = vec![false; self.tris.len()];
        let mut queue = vec![start];
        bad[start] = true;
        while let Some(t) = queue.pop() {
            for k in 0..3 {
                let nb = self.tris[t].n[k];
                if nb != NONE && !bad[nb] && self.in_circumcircle(nb, p) {
                    bad[nb] = true;
                    queue.push(nb);
                }
            }
        }
        let mut fresh = Vec::new();
        for t in 0..self.tris.len() {
            if !bad[t] {
                continue;
            }
            let v = self.tris[t].v;
            for k in 0..3 {
                let nb = self.tris[t].n[k];
                if nb == NONE || !bad[nb] {
                    fresh.push(Tri {
                        v: [v[(k + 1) % 3], v[(k + 2) % 3], pi],
                        n: [NONE; 3],
                    });
                }
            }
        }
        let mut kept: Vec<Tri> = (0..self.tris.len())
            .filter(|&t| !bad[t])
            .map(|t| self.tris[t])
            .collect();
        kept.extend(fresh);
        self.tris = kept;
        self.rebuild_adjacency();
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.tris.iter().any(|t| {
            let v = t.v;
            (0..3).any(|k| {
                let (x, y) = (v[k], v[(k + 1) % 3]);
                (x == a && y == b) || (x == b && y == a)
            })
        })
    }

    /// Forces segment `a-b` into the triangulation.
    fn recover(&mut self, a: usize, b: usize) -> Result<(), CdtError> {
        if self.has_edge(a, b) {
            return Ok(());
        }
        let (pa, pb) = (self.pts[a], self.pts[b]);
        // First triangle: the one at `a` whose wedge contains the direction to `b`.
        let mut start = None;
        for (ti, t) in self.tris.iter().enumerate() {
            if let Some(k) = t.v.iter().position(|&x| x == a) {
                let p = t.v[(k + 1) % 3];
                let q = t.v[(k + 2) % 3];
                if orient2d(pa, self.pts[p], pb) > 0.0 && orient2d(pa, self.pts[q], pb) < 0.0 {
                    start = Some((ti, p, q));
                    break;
                }
            }
        }
        let (mut t, mut right, mut left) = start.ok_or(CdtError::Recovery(a, b))?;
        let mut removed = vec![t];
        let mut left_chain = vec![left];
        let mut right_chain = vec![right];
        loop {
            // Neighbor across (right, left).
            let tv = self.tris[t].v;
            let k = (0..3)
                .find(|&k| tv[k] != right && tv[k] != left)
                .ok_or(CdtError::Recovery(a, b))?;
            let nb = self.tris[t].n[k];
            if nb == NONE {
                return Err(CdtError::Recovery(a, b));
            }
            let nv = self.tris[nb].v;
            let r = nv
                .iter()
                .copied()
                .find(|&x| x != right && x != left)
                .ok_or(CdtError::Recovery(a, b))?;
            removed.push(nb);
            t = nb;
            if r == b {
                break;
            }
            let o = orient2d(pa, pb, self.pts[r]);
            if o > 0.0 {
                left = r;
                left_chain.push(r);
            } else if o < 0.0 {
                right = r;
                right_chain.push(r);
            } else {
                return Err(CdtError::Recovery(a, b));
            }
            if removed.len() > self.tris.len() {
                return Err(CdtError::Recovery(a, b));
            }
        }
        let mut new_tris = Vec::new();
        // Left side polygon lies to the left of a->b: triangles (a, b, c) are CCW.
        fill_pseudo_polygon(&self.pts, a, b, &left_chain, &mut new_tris);
        // Right side: walk b->a so the chain is to the left.
        let rev: Vec<usize> = right_chain.iter().rev().copied().collect();
        fill_pseudo_polygon(&self.pts, b, a, &rev, &mut new_tris);
        let removed: BTreeSet<usize> = removed.into_iter().collect();
        let mut kept: Vec<Tri> = (0..self.tris.len())
            .filter(|t| !removed.contains(t))
            .map(|t| self.tris[t])
            .collect();
        kept.extend(new_tris.into_iter().map(|v| Tri { v, n: [NONE; 3] }));
        self.tris = kept;
        self.rebuild_adjacency();
        Ok(())
    }
}

/// Delaunay triangulation of the pseudo-polygon `a, chain..., b` lying to the
/// left of `a -> b` (chain ordered from `a` to `b`).
fn fill_pseudo_polygon(
    pts: &[Vec2],
    a: usize,
    b: usize,
    chain: &[usize],
    out: &mut Vec<[usize; 3]>,
) {
    if chain.is_empty() {
        return;
    }
    let mut ci = 0;
    for i in 1..chain.len() {
        if incircle(pts[a], pts[b], pts[chain[ci]], pts[chain[i]]) > 0.0 {
            ci = i;
        }
    }
    let c = chain[ci];
    // `chain` runs from the `a` end to the `b` end, so the part before `c`
    // borders edge (c, a) and the part after borders (b, c).
    fill_pseudo_polygon(pts, c, b, &chain[ci + 1..], out);
    fill_pseudo_polygon(pts, a, c, &chain[..ci], out);
    out.push([a, b, c]);
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SegKind {
    Boundary,
    Interior,
}

/// Triangulates the polygon `outer` (indices into `points`) minus `holes`,
/// with interior `constraints`. Either orientation is accepted for loops.
pub fn triangulate_polygon(
    points: &[Vec2],
    outer: &[usize],
    holes: &[Vec<usize>],
    constraints: &[(usize, usize)],
) -> Result<Cdt, CdtError> {
    triangulate_polygon_with_points(points, outer, holes, constraints, &[])
}

/// As [`triangulate_polygon`], additionally inserting the isolated interior
/// points `steiner` (indices into `points`, assumed inside the region).
pub fn triangulate_polygon_with_points(
    points: &[Vec2],
    outer: &[usize],
    holes: &[Vec<usize>],
    constraints: &[(usize, usize)],
    steiner: &[usize],
) -> Result<Cdt, CdtError> {
    if outer.len() < 3 {
        return Err(CdtError::Degenerate);
    }
    let mut pts: Vec<Vec2> = points.to_vec();
    let scale = {
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for &i in outer {
            lo = lo.inf(&pts[i]);
            hi = hi.sup(&pts[i]);
        }
        (hi - lo).norm()
    };
    if !(scale > 0.0) {
        return Err(CdtError::Degenerate);
    }
    let tol = 1e-10 * scale;

    // Boundary segments.
    let mut segs: Vec<(usize, usize, SegKind)> = Vec::new();
    let mut loops: Vec<&[usize]> = vec![outer];
    loops.extend(holes.iter().map(|h| h.as_slice()));
    for lp in &loops {
        if lp.len() < 3 {
            return Err(CdtError::Degenerate);
        }
        for k in 0..lp.len() {
            let (a, b) = (lp[k], lp[(k + 1) % lp.len()]);
            if a == b || pts[a] == pts[b] {
                return Err(CdtError::Degenerate);
            }
            segs.push((a, b, SegKind::Boundary));
        }
    }
    let nb = segs.len();
    for i in 0..nb {
        for j in i + 1..nb {
            let (a, b, _) = segs[i];
            let (c, d, _) = segs[j];
            let shared = [a, b].iter().filter(|x| **x == c || **x == d).count();
            if shared == 0 && segments_intersect(pts[a], pts[b], pts[c], pts[d]) {
                return Err(CdtError::SelfIntersecting(i, j));
            }
            if shared == 1 {
                // Adjacent edges may only meet at the shared vertex.
                let s = if a == c || a == d { a } else { b };
                let (oa, ob) = (if a == s { b } else { a }, if c == s { d } else { c });
                let (u, w) = (pts[oa] - pts[s], pts[ob] - pts[s]);
                if orient2d(pts[s], pts[oa], pts[ob]) == 0.0 && u.dot(&w) > 0.0 {
                    return Err(CdtError::SelfIntersecting(i, j));
                }
            }
        }
    }

    let loop_polys: Vec<Vec<Vec2>> = loops
        .iter()
        .map(|lp| lp.iter().map(|&i| pts[i]).collect())
        .collect();
    let inside = |p: Vec2| {
        point_in_polygon(p, &loop_polys[0])
            && !loop_polys[1..].iter().any(|h| point_in_polygon(p, h))
    };

    // Constraints must stay inside the region.
    for (ci, &(a, b)) in constraints.iter().enumerate() {
        if a == b {
            continue;
        }
        let mid = (pts[a] + pts[b]) * 0.5;
        let on_boundary_edge = segs[..nb]
            .iter()
            .any(|&(x, y, _)| ordered(x, y) == ordered(a, b));
        if !on_boundary_edge && !inside(mid) {
            return Err(CdtError::ConstraintOutside(ci));
        }
        for &(x, y, _) in &segs[..nb] {
            if [x, y].contains(&a) || [x, y].contains(&b) {
                continue;
            }
            if proper_cross(pts[a], pts[b], pts[x], pts[y]) {
                return Err(CdtError::ConstraintOutside(ci));
            }
        }
        segs.push((a, b, SegKind::Interior));
    }

    // Split crossing interior constraints.
    let mut extra = Vec::new();
    for i in nb..segs.len() {
        for j in i + 1..segs.len() {
            let (a, b, _) = segs[i];
            let (c, d, _) = segs[j];
            if [a, b].contains(&c) || [a, b].contains(&d) {
                continue;
            }
            if proper_cross(pts[a], pts[b], pts[c], pts[d]) {
                extra.push(line_intersection(pts[a], pts[b], pts[c], pts[d]));
            }
        }
    }
    for p in extra {
        if !pts.iter().any(|q| (q - p).norm() <= tol) {
            pts.push(p);
        }
    }

    // Only vertices used by segments or lying inside take part.
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for &(a, b, _) in &segs {
        used.insert(a);
        used.insert(b);
    }
    for i in points.len()..pts.len() {
        used.insert(i);
    }
    used.extend(steiner.iter().copied());

    // Subdivide every segment at vertices lying on it.
    let mut sub: Vec<(usize, usize, SegKind)> = Vec::new();
    for &(a, b, kind) in &segs {
        let (pa, pb) = (pts[a], pts[b]);
        let d = pb - pa;
        let len2 = d.norm_squared();
        let mut on: Vec<(f64, usize)> = used
            .iter()
            .copied()
            .filter(|&v| v != a && v != b)
            .filter_map(|v| {
                let t = (pts[v] - pa).dot(&d) / len2;
                if t <= 0.0 || t >= 1.0 {
                    return None;
                }
                let dist = (pa + d * t - pts[v]).norm();
                (dist <= tol).then_some((t, v))
            })
            .collect();
        on.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut prev = a;
        for (_, v) in on {
            sub.push((prev, v, kind));
            prev = v;
        }
        sub.push((prev, b, kind));
    }

    // Delaunay triangulation inside a super triangle.
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    for &i in &used {
        lo = lo.inf(&pts[i]);
        hi = hi.sup(&pts[i]);
    }
    let c = (lo + hi) * 0.5;
    let m = (hi - lo).max().max(1e-12) * 64.0;
    let s0 = pts.len();
    pts.push(Vec2::new(c.x - 2.0 * m, c.y - m));
    pts.push(Vec2::new(c.x + 2.0 * m, c.y - m));
    pts.push(Vec2::new(c.x, c.y + 2.0 * m));
    let mut mesh = Mesh {
        pts,
        tris: vec![Tri {
            v: [s0, s0 + 1, s0 + 2],
            n: [NONE; 3],
        }],
    };
    for &i in &used {
        mesh.insert(i);
    }

    for &(a, b, _) in &sub {
        mesh.recover(a, b)?;
    }

    // Parity flood fill from the super triangle's corners.
    let boundary: BTreeSet<(usize, usize)> = sub
        .iter()
        .filter(|s| s.2 == SegKind::Boundary)
        .map(|s| ordered(s.0, s.1))
        .collect();
    let constrained: BTreeSet<(usize, usize)> = sub.iter().map(|s| ordered(s.0, s.1)).collect();
    let nt = mesh.tris.len();
    let mut depth = vec![usize::MAX; nt];
    let mut dq = VecDeque::new();
    for t in 0..nt {
        if mesh.tris[t].v.iter().any(|&v| v >= s0) {
            depth[t] = 0;
            dq.push_back(t);
        }
    }
    while let Some(t) = dq.pop_front() {
        let v = mesh.tris[t].v;
        for k in 0..3 {
            let nb = mesh.tris[t].n[k];
            if nb == NONE {
                continue;
            }
            let e = ordered(v[(k + 1) % 3], v[(k + 2) % 3]);
            let w = usize::from(boundary.contains(&e));
            let d = depth[t] + w;
            if d < depth[nb] {
                depth[nb] = d;
                if w == 0 {
                    dq.push_front(nb);
                } else {
                    dq.push_back(nb);
                }
            }
        }
    }
    mesh.tris = (0..nt)
        .filter(|&t| depth[t] % 2 == 1 && depth[t] != usize::MAX)
        .map(|t| mesh.tris[t])
        .collect();
    mesh.rebuild_adjacency();

    legalize(&mut mesh, &constrained);

    mesh.pts.truncate(s0);
    Ok(Cdt {
        points: mesh.pts,
        triangles: mesh.tris.iter().map(|t| t.v).collect(),
        constrained,
    })
}

/// Lawson flips until every unconstrained interior edge is locally Delaunay.
fn legalize(mesh: &mut Mesh, constrained: &BTreeSet<(usize, usize)>) {
    let max_passes = 4 * mesh.tris.len() + 8;
    for _ in 0..max_passes {
        let mut flipped = false;
        let mut touched = vec![false; mesh.tris.len()];
        for t in 0..mesh.tris.len() {
            if touched[t] {
                continue;
            }
            for k in 0..3 {
                let nb = mesh.tris[t].n[k];
                if nb == NONE || touched[nb] {
                    continue;
                }
                let v = mesh.tris[t].v;
                let (a, b, c) = (v[(k + 1) % 3], v[(k + 2) % 3], v[k]);
                if constrained.contains(&ordered(a, b)) {
                    continue;
                }
                let Some(&d) = mesh.tris[nb].v.iter().find(|&&x| x != a && x != b) else {
                    continue;
                };
                let p = &mesh.pts;
                // (c, a, b) is CCW; d lies across edge a-b.
                if incircle(p[c], p[a], p[b], p[d]) > 0.0
                    && orient2d(p[c], p[a], p[d]) > 0.0
                    && orient2d(p[d], p[b], p[c]) > 0.0
                {
                    mesh.tris[t].v = [c, a, d];
                    mesh.tris[nb].v = [d, b, c];
                    touched[t] = true;
                    touched[nb] = true;
                    flipped = true;
                    break;
                }
            }
        }
        if !flipped {
            return;
        }
        mesh.rebuild_adjacency();
    }
}

fn proper_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient2d(c, d, a);
    let d2 = orient2d(c, d, b);
    let d3 = orient2d(a, b, c);
    let d4 = orient2d(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn line_intersection(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> Vec2 {
    let r = b - a;
    let s = d - c;
    let denom = r.x * s.y - r.y * s.x;
    let t = ((c.x - a.x) * s.y - (c.y - a.y) * s.x) / denom;
    a + r * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_area;

    fn square() -> Vec<Vec2> {
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn unit_square() {
        let cdt = triangulate_polygon(&square(), &[0, 1, 2, 3], &[], &[]).unwrap();
        assert_eq!(cdt.triangles.len(), 2);
        assert!((cdt.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_input_gives_ccw_triangles() {
        let cdt = triangulate_polygon(&square(), &[3, 2, 1, 0], &[], &[]).unwrap();
        assert!((cdt.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_constraint_is_kept() {
        for diag in [(0usize, 2usize), (1, 3)] {
            let cdt = triangulate_polygon(&square(), &[0, 1, 2, 3], &[], &[diag]).unwrap();
            assert!(cdt.edges().contains(&ordered(diag.0, diag.1)));
        }
    }

    #[test]
    fn crossing_constraints_split() {
        let cdt = triangulate_polygon(&square(), &[0, 1, 2, 3], &[], &[(0, 2), (1, 3)]).unwrap();
        assert_eq!(cdt.points.len(), 5);
        assert_eq!(cdt.points[4], Vec2::new(0.5, 0.5));
        assert_eq!(cdt.triangles.len(), 4);
        let e = cdt.edges();
        for k in 0..4 {
            assert!(e.contains(&(k, 4)));
        }
    }

    #[test]
    fn polygon_with_hole() {
        let mut pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(0.0, 4.0),
        ];
        pts.extend([
            Vec2::new(1.0, 1.0),
            Vec2::new(3.0, 1.0),
            Vec2::new(3.0, 3.0),
            Vec2::new(1.0, 3.0),
        ]);
        let cdt = triangulate_polygon(&pts, &[0, 1, 2, 3], &[vec![4, 5, 6, 7]], &[]).unwrap();
        assert!((cdt.area() - 12.0).abs() < 1e-12);
        assert_eq!(cdt.triangles.len(), 8);
    }

    #[test]
    fn collinear_boundary_vertices() {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.5, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let cdt = triangulate_polygon(&pts, &[0, 1, 2, 3, 4], &[], &[]).unwrap();
        assert_eq!(cdt.triangles.len(), 3);
        assert!((cdt.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concave_polygon_area() {
        // An L shape.
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        let cdt = triangulate_polygon(&pts, &[0, 1, 2, 3, 4, 5], &[], &[]).unwrap();
        assert_eq!(cdt.triangles.len(), 4);
        assert!((cdt.area() - polygon_area(&pts)).abs() < 1e-12);
    }

    #[test]
    fn self_intersecting_is_rejected() {
        let pts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(matches!(
            triangulate_polygon(&pts, &[0, 1, 2, 3], &[], &[]),
            Err(CdtError::SelfIntersecting(..))
        ));
    }

    #[test]
    fn outside_constraint_is_rejected() {
        let mut pts = square();
        pts.push(Vec2::new(2.0, 2.0));
        pts.push(Vec2::new(3.0, 2.0));
        assert_eq!(
            triangulate_polygon(&pts, &[0, 1, 2, 3], &[], &[(4, 5)]),
            Err(CdtError::ConstraintOutside(0))
        );
        // From a vertex out through an edge.
        assert_eq!(
            triangulate_polygon(&pts, &[0, 1, 2, 3], &[], &[(0, 4)]),
            Err(CdtError::ConstraintOutside(0))
        );
    }

    /// Star-shaped polygon from positive angular steps and radii.
    fn star(steps: &[f64], radii: &[f64]) -> Vec<Vec2> {
        let total: f64 = steps.iter().sum();
        let mut t = 0.0;
        steps
            .iter()
            .zip(radii)
            .map(|(s, r)| {
                let a = t / total * std::f64::consts::TAU;
                t += s;
                Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect()
    }

    /// Brute-force constrained Delaunay check: any vertex inside a circumcircle
    /// must be hidden from the triangle by a constrained edge.
    fn check_cdt(cdt: &Cdt) {
        let p = &cdt.points;
        for t in &cdt.triangles {
            let [a, b, c] = t.map(|i| p[i]);
            let g = (a + b + c) / 3.0;
            for (vi, &v) in p.iter().enumerate() {
                if t.contains(&vi) || incircle(a, b, c, v) <= 0.0 {
                    continue;
                }
                let hidden = cdt
                    .constrained
                    .iter()
                    .any(|&(x, y)| x != vi && y != vi && segments_intersect(g, v, p[x], p[y]));
                assert!(hidden, "vertex {vi} inside circumcircle of {t:?}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn random_star_polygons(
            steps in proptest::collection::vec(0.05f64..1.0, 3..50),
            radii in proptest::collection::vec(0.2f64..1.0, 50),
            diag in proptest::collection::vec((0usize..50, 0usize..50), 0..4),
        ) {
            let total: f64 = steps.iter().sum();
            proptest::prop_assume!(steps.iter().all(|s| *s < 0.45 * total));
            let pts = star(&steps, &radii);
            let outer: Vec<usize> = (0..pts.len()).collect();
            let n = pts.len();
            let poly = pts.clone();
            let cons: Vec<(usize, usize)> = diag
                .iter()
                .map(|&(i, j)| (i % n, j % n))
                .filter(|&(i, j)| {
                    i != j && (i + 1) % n != j && (j + 1) % n != i
                        && point_in_polygon((pts[i] + pts[j]) * 0.5, &poly)
                        && (0..n).all(|k| {
                            let (x, y) = (k, (k + 1) % n);
                            [x, y].contains(&i) || [x, y].contains(&j)
                                || !segments_intersect(pts[i], pts[j], pts[x], pts[y])
                        })
                })
                .collect();
            let cdt = triangulate_polygon(&pts, &outer, &[], &cons).unwrap();
            proptest::prop_assert!((cdt.area() - polygon_area(&pts)).abs() <= 1e-9);
            let edges = cdt.edges();
            for &c in &cdt.constrained {
                proptest::prop_assert!(edges.contains(&c));
            }
            for t in &cdt.triangles {
                let [a, b, c] = t.map(|i| cdt.points[i]);
                proptest::prop_assert!(orient2d(a, b, c) > 0.0);
            }
            check_cdt(&cdt);
        }
    }
}
