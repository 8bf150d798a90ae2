//! Hole polygons in the element frame: notch closure, half-plane clipping at
//! neighbor lines, and the constrained Delaunay fill.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryLoop;
use super::cdt::triangulate_polygon_with_points;
use super::planes::{segment_corner, IntersectionEdge};
use super::ReconstructionError;
use crate::geometry::{point_in_polygon, polygon_area, Frame, Vec2, Vec3};
use crate::mesh::{Label, LabeledMesh, NO_UV};
use crate::segmentation::PlaneSegment;

/// Where a region vertex comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum VertexSource {
    Existing(u32),
    New(Vec3),
}

/// Everything the per-element fill needs about one element.
#[derive(Clone, Debug)]
pub struct ElementContext {
    pub index: usize,
    pub label: Label,
    /// Plane frame; `u × v` is the facing normal and the origin is the
    /// area-weighted centroid of the element's faces.
    pub frame: Frame,
    /// Intersection edges incident to this element.
    pub edges: Vec<IntersectionEdge>,
    /// Per neighbor: mesh vertices lying on the shared line.
    pub anchors: BTreeMap<usize, Vec<(u32, Vec3)>>,
    pub tol: f64,
}

impl ElementContext {
    pub fn edge_to(&self, neighbor: usize) -> Option<&IntersectionEdge> {
        self.edges.iter().find(|e| e.other(self.index) == neighbor)
    }
}

/// Planar polygon (plus islands) ready for triangulation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HoleRegion {
    pub points: Vec<Vec2>,
    pub sources: Vec<VertexSource>,
    pub outer: Vec<usize>,
    pub islands: Vec<Vec<usize>>,
    pub constraints: Vec<(usize, usize)>,
}

impl HoleRegion {
    pub fn outer_polygon(&self) -> Vec<Vec2> {
        self.outer.iter().map(|&i| self.points[i]).collect()
    }
}

#[derive(Clone, Copy, Debug)]
struct PolyVertex {
    pos: Vec2,
    src: VertexSource,
    /// Neighbor whose line carries the edge arriving at this vertex.
    tag: Option<usize>,
}

/// Side-of-line function `s(q) = a·q + c` for a neighbor plane restricted to
/// the element frame; positive on the element's side.
fn side_fn(frame: &Frame, seg: &PlaneSegment) -> Option<(Vec2, f64)> {
    let n = seg.normal;
    let a = Vec2::new(n.dot(&frame.u), n.dot(&frame.v));
    let c = n.dot(&frame.origin) - seg.offset;
    if c == 0.0 || a.norm() == 0.0 {
        return None;
    }
    let s = c.signum();
    Some((a * s, c * s))
}

/// Distance below which a vertex counts as on the clip line.
const ON_LINE: f64 = 1e-9;

/// Projects a loop to 2D, closes notches along their neighbor lines and
/// clips the polygon to the element's side of every crossing neighbor line.
/// Closure and clip edges become constraint segments; where two lines meet,
/// the three-plane corner is inserted exactly.
pub fn clip_hole_region(
    lp: &BoundaryLoop,
    vertices: &[Vec3],
    ctx: &ElementContext,
    segments: &[PlaneSegment],
) -> Result<HoleRegion, ReconstructionError> {
    let frame = &ctx.frame;
    let existing = |v: u32| PolyVertex {
        pos: frame.project(&vertices[v as usize]),
        src: VertexSource::Existing(v),
        tag: None,
    };
    let mut poly: Vec<PolyVertex> = lp.vertices.iter().map(|&v| existing(v)).collect();

    if lp.is_notch() {
        let first = *lp
            .vertices
            .first()
            .ok_or(ReconstructionError::EmptyRegion)?;
        let last = *lp.vertices.last().ok_or(ReconstructionError::EmptyRegion)?;
        // Waypoints from the last vertex back to the first.
        let mut way: Vec<(Vec3, Option<u32>)> = vec![(vertices[last as usize], Some(last))];
        for w in lp.closure.windows(2) {
            let c = segment_corner(segments, [ctx.index, w[0], w[1]])?;
            way.push((c.position, None));
        }
        way.push((vertices[first as usize], Some(first)));
        for (k, &line) in lp.closure.iter().enumerate() {
            let edge = ctx.edge_to(line).ok_or(ReconstructionError::EmptyRegion)?;
            let (from, to) = (way[k].0, way[k + 1].0);
            let (t0, t1) = (edge.line.param(&from), edge.line.param(&to));
            let mut mids: Vec<(f64, u32, Vec3)> = ctx
                .anchors
                .get(&line)
                .map(|v| v.as_slice())
                .unwrap_or(&[])
                .iter()
                .filter(|(id, _)| !lp.vertices.contains(id))
                .map(|&(id, p)| (edge.line.param(&p), id, p))
                .filter(|&(t, _, _)| {
                    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                    t > lo + ON_LINE && t < hi - ON_LINE
                })
                .collect();
            mids.sort_by(|a, b| {
                let key = |t: f64| if t0 < t1 { t } else { -t };
                key(a.0).total_cmp(&key(b.0)).then(a.1.cmp(&b.1))
            });
            for (_, id, p) in mids {
                poly.push(PolyVertex {
                    pos: frame.project(&p),
                    src: VertexSource::Existing(id),
                    tag: Some(line),
                });
            }
            if k + 1 < lp.closure.len() {
                let c = way[k + 1].0;
                poly.push(PolyVertex {
                    pos: frame.project(&c),
                    src: VertexSource::New(c),
                    tag: Some(line),
                });
            } else {
                // Edge arriving back at the first vertex.
                poly[0].tag = Some(line);
            }
        }
    }

    for edge in &ctx.edges {
        let nb = edge.other(ctx.index);
        if lp.closure.contains(&nb) {
            continue;
        }
        let Some((a, c)) = side_fn(frame, &segments[nb]) else {
            continue;
        };
        let s = |q: Vec2| a.dot(&q) + c;
        let scale = a.norm();
        let vals: Vec<f64> = poly.iter().map(|p| s(p.pos) / scale).collect();
        if vals.iter().all(|&x| x >= -ON_LINE) {
            continue;
        }
        // Only clip where the line crosses the polygon inside its extent.
        let crosses_active = (0..poly.len()).any(|i| {
            let j = (i + 1) % poly.len();
            let (si, sj) = (vals[i], vals[j]);
            if (si < -ON_LINE) == (sj < -ON_LINE) {
                return false;
            }
            let t = si / (si - sj);
            let q = poly[i].pos + (poly[j].pos - poly[i].pos) * t;
            let p3 = frame.lift(q);
            let tl = edge.line.param(&p3);
            tl >= edge.t_min - ctx.tol && tl <= edge.t_max + ctx.tol
        });
        if !crosses_active {
            continue;
        }
        poly = clip_half_plane(&poly, &vals, nb, frame, segments, ctx.index);
        if poly.len() < 3 {
            return Err(ReconstructionError::EmptyRegion);
        }
    }

    // Drop consecutive duplicates.
    let mut cleaned: Vec<PolyVertex> = Vec::with_capacity(poly.len());
    for p in poly {
        if let Some(prev) = cleaned.last_mut() {
            if (prev.pos - p.pos).norm() <= 1e-12 {
                if matches!(p.src, VertexSource::Existing(_)) {
                    prev.src = p.src;
                }
                continue;
            }
        }
        cleaned.push(p);
    }
    while cleaned.len() > 1 && (cleaned[0].pos - cleaned[cleaned.len() - 1].pos).norm() <= 1e-12 {
        let last = cleaned.pop().expect("len > 1");
        if matches!(last.src, VertexSource::Existing(_)) {
            cleaned[0].src = last.src;
        }
    }
    let pts: Vec<Vec2> = cleaned.iter().map(|p| p.pos).collect();
    if cleaned.len() < 3 || polygon_area(&pts).abs() <= 1e-14 {
        return Err(ReconstructionError::EmptyRegion);
    }

    let mut region = HoleRegion::default();
    for p in &cleaned {
        region.points.push(p.pos);
        region.sources.push(p.src);
    }
    let n = cleaned.len();
    region.outer = (0..n).collect();
    for (i, p) in cleaned.iter().enumerate() {
        if p.tag.is_some() {
            region.constraints.push(((i + n - 1) % n, i));
        }
    }
    for island in &lp.islands {
        let ip: Vec<Vec2> = island
            .iter()
            .map(|&v| frame.project(&vertices[v as usize]))
            .collect();
        if ip.iter().all(|&q| point_in_polygon(q, &pts)) {
            let base = region.points.len();
            region.islands.push((base..base + island.len()).collect());
            region.points.extend(ip);
            region
                .sources
                .extend(island.iter().map(|&v| VertexSource::Existing(v)));
        }
    }
    Ok(region)
}

/// Sutherland–Hodgman clip keeping `vals >= -ON_LINE`.
fn clip_half_plane(
    poly: &[PolyVertex],
    vals: &[f64],
    line: usize,
    frame: &Frame,
    segments: &[PlaneSegment],
    element: usize,
) -> Vec<PolyVertex> {
    let n = poly.len();
    let inside = |i: usize| vals[i] >= -ON_LINE;
    let crossing = |i: usize, j: usize| -> PolyVertex {
        // Corner when the crossed edge already lies on another line.
        if let Some(other) = poly[j].tag {
            if other != line {
                if let Ok(c) = segment_corner(segments, [element, other, line]) {
                    return PolyVertex {
                        pos: frame.project(&c.position),
                        src: VertexSource::New(c.position),
                        tag: None,
                    };
                }
            }
        }
        let (si, sj) = (vals[i], vals[j]);
        let t = si / (si - sj);
        let q = poly[i].pos + (poly[j].pos - poly[i].pos) * t;
        PolyVertex {
            pos: q,
            src: VertexSource::New(frame.lift(q)),
            tag: None,
        }
    };
    let mut out = Vec::with_capacity(n + 2);
    for j in 0..n {
        let i = (j + n - 1) % n;
        match (inside(i), inside(j)) {
            (true, true) => out.push(poly[j]),
            (true, false) => {
                let mut x = crossing(i, j);
                x.tag = poly[j].tag;
                out.push(x);
            }
            (false, true) => {
                let mut x = crossing(i, j);
                x.tag = Some(line);
                out.push(x);
                out.push(poly[j]);
            }
            (false, false) => {}
        }
    }
    out
}

/// New triangles for one element, indexing `sources`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FillPatch {
    pub label: Label,
    pub sources: Vec<VertexSource>,
    pub triangles: Vec<[usize; 3]>,
}

/// Constrained Delaunay fill of a region, lifted to the element plane.
///
/// With `max_edge_length`, interior lattice points at that spacing are
/// added as Steiner vertices; without it the only new vertices are the
/// region's own and constraint crossings.
pub fn fill_hole_cdt(
    region: &HoleRegion,
    frame: &Frame,
    label: Label,
    max_edge_length: Option<f64>,
) -> Result<FillPatch, ReconstructionError> {
    let mut points = region.points.clone();
    let mut extra = Vec::new();
    if let Some(h) = max_edge_length.filter(|h| *h > 0.0) {
        let outer = region.outer_polygon();
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for p in &outer {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let islands: Vec<Vec<Vec2>> = region
            .islands
            .iter()
            .map(|is| is.iter().map(|&i| region.points[i]).collect())
            .collect();
        let all_loops: Vec<&[Vec2]> = std::iter::once(outer.as_slice())
            .chain(islands.iter().map(|v| v.as_slice()))
            .collect();
        let nx = ((hi.x - lo.x) / h).floor() as i64;
        let ny = ((hi.y - lo.y) / h).floor() as i64;
        for j in 1..=ny {
            for i in 1..=nx {
                let q = Vec2::new(lo.x + i as f64 * h, lo.y + j as f64 * h);
                if !point_in_polygon(q, &outer) || islands.iter().any(|is| point_in_polygon(q, is))
                {
                    continue;
                }
                let near = all_loops.iter().any(|lp| {
                    (0..lp.len())
                        .any(|k| segment_distance(q, lp[k], lp[(k + 1) % lp.len()]) < 0.5 * h)
                });
                if !near {
                    extra.push(points.len());
                    points.push(q);
                }
            }
        }
    }
    let cdt = triangulate_polygon_with_points(
        &points,
        &region.outer,
        &region.islands,
        &region.constraints,
        &extra,
    )?;

    let mut sources = region.sources.clone();
    for p in &cdt.points[region.points.len()..] {
        sources.push(VertexSource::New(frame.lift(*p)));
    }
    Ok(FillPatch {
        label,
        sources,
        triangles: cdt.triangles,
    })
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / l2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Spatial hash for welding new vertices onto existing ones.
pub struct Welder {
    cell: f64,
    tol: f64,
    grid: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl Welder {
    pub fn new(mesh: &LabeledMesh, tol: f64) -> Welder {
        let cell = tol.max(1e-12) * 4.0;
        let mut w = Welder {
            cell,
            tol,
            grid: HashMap::new(),
        };
        let mut used = vec![false; mesh.vertices.len()];
        for t in &mesh.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        for (i, p) in mesh.vertices.iter().enumerate() {
            if used[i] {
                w.insert(i as u32, p);
            }
        }
        w
    }

    fn key(&self, p: &Vec3) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, id: u32, p: &Vec3) {
        let k = self.key(p);
        self.grid.entry(k).or_default().push(id);
    }

    /// Closest vertex within tolerance (lowest index on ties).
    pub fn find(&self, mesh_vertices: &[Vec3], p: &Vec3) -> Option<u32> {
        let (x, y, z) = self.key(p);
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.grid.get(&(x + dx, y + dy, z + dz)) {
                        for &id in ids {
                            let d = (mesh_vertices[id as usize] - p).norm();
                            if d <= self.tol
                                && best.is_none_or(|(bd, bi)| d < bd || (d == bd && id < bi))
                            {
                                best = Some((d, id));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(_, id)| id)
    }

    /// Adds the patch to the mesh as new faces; returns the number of faces added.
    pub fn apply(&mut self, mesh: &mut LabeledMesh, patch: &FillPatch) -> usize {
        let ids: Vec<u32> = patch
            .sources
            .iter()
            .map(|s| match *s {
                VertexSource::Existing(v) => v,
                VertexSource::New(p) => match self.find(&mesh.vertices, &p) {
                    Some(v) => v,
                    None => {
                        let v = mesh.vertices.len() as u32;
                        mesh.vertices.push(p);
                        self.insert(v, &p);
                        v
                    }
                },
            })
            .collect();
        let mut added = 0;
        for t in &patch.triangles {
            let tri = [ids[t[0]], ids[t[1]], ids[t[2]]];
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                continue;
            }
            mesh.triangles.push(tri);
            mesh.labels.push(patch.label);
            mesh.is_new.push(true);
            mesh.face_page.push(0);
            if let Some(uvs) = mesh.corner_uvs.as_mut() {
                uvs.push([NO_UV; 3]);
            }
            added += 1;
        }
        added
    }
}
