//! Boundary loops of one element: interior holes and notches cut into the
//! element's outline along neighbor intersection lines.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::planes::{segment_corner, IntersectionEdge};
use super::ReconstructionError;
use crate::geometry::{point_in_polygon, polygon_area, segments_intersect, Frame, Vec2};
use crate::mesh::{edge_key, Label, LabeledMesh};
use crate::segmentation::PlaneSegment;

/// A closed polygon of mesh vertices bounding a region to fill.
///
/// Counter-clockwise in the element frame. `closure` is empty for interior
/// holes; for a notch it lists the neighbor segments whose intersection
/// lines close the polygon, walked from the last vertex back to the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLoop {
    pub element: Label,
    pub vertices: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub islands: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub closure: Vec<usize>,
}

impl BoundaryLoop {
    pub fn is_notch(&self) -> bool {
        !self.closure.is_empty()
    }
}

/// All closed boundary loops of the faces carrying `label`, each with its
/// signed area in `frame` (positive = counter-clockwise).
pub fn walk_loops(
    mesh: &LabeledMesh,
    label: Label,
    frame: &Frame,
) -> Result<Vec<(Vec<u32>, f64)>, ReconstructionError> {
    let faces = mesh.faces_with_label(label);
    let mut count: HashMap<(u32, u32), u32> = HashMap::new();
    for &f in &faces {
        let t = mesh.triangles[f];
        for k in 0..3 {
            *count.entry(edge_key(t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut bad_vertices: BTreeSet<u32> = BTreeSet::new();
    for (e, &c) in &count {
        if c > 2 {
            bad_vertices.insert(e.0);
            bad_vertices.insert(e.1);
        }
    }
    let mut out_edges: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &f in &faces {
        let t = mesh.triangles[f];
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if count[&edge_key(a, b)] == 1 {
                out_edges.entry(a).or_default().push(b);
            }
        }
    }
    for v in out_edges.values_mut() {
        v.sort_unstable();
    }
    let pos = |v: u32| frame.project(&mesh.vertices[v as usize]);

    let mut used: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut loops = Vec::new();
    let starts: Vec<(u32, u32)> = out_edges
        .iter()
        .flat_map(|(&a, bs)| bs.iter().map(move |&b| (a, b)))
        .collect();
    for start in starts {
        if used.contains(&start) {
            continue;
        }
        used.insert(start);
        let mut verts = vec![start.0];
        let (mut u, mut v) = start;
        loop {
            if bad_vertices.contains(&v) {
                return Err(ReconstructionError::NonManifold { vertex: v });
            }
            let cands = out_edges
                .get(&v)
                .ok_or(ReconstructionError::OpenChain { vertex: v })?;
            let w = if cands.len() == 1 {
                cands[0]
            } else {
                // At a pinch, keep the empty sector on the right: take the first
                // outgoing edge counter-clockwise from the reversed incoming edge.
                let (pu, pv) = (pos(u), pos(v));
                let back = pu - pv;
                *cands
                    .iter()
                    .min_by(|&&x, &&y| {
                        let ax = ccw_angle(back, pos(x) - pv);
                        let ay = ccw_angle(back, pos(y) - pv);
                        ax.total_cmp(&ay).then(x.cmp(&y))
                    })
                    .expect("non-empty")
            };
            if (v, w) == start {
                break;
            }
            if !used.insert((v, w)) {
                return Err(ReconstructionError::OpenChain { vertex: v });
            }
            verts.push(v);
            u = v;
            v = w;
        }
        let poly: Vec<Vec2> = verts.iter().map(|&i| pos(i)).collect();
        let area = polygon_area(&poly);
        loops.push((verts, area));
    }
    Ok(loops)
}

fn ccw_angle(from: Vec2, to: Vec2) -> f64 {
    let a = (from.x * to.y - from.y * to.x).atan2(from.dot(&to));
    if a <= 0.0 {
        a + std::f64::consts::TAU
    } else {
        a
    }
}

/// Loops split into the outline (largest absolute area), other outer
/// components, and holes (clockwise loops), each hole with the islands it
/// contains.
struct LoopSet {
    outlines: Vec<Vec<u32>>,
    holes: Vec<(Vec<u32>, Vec<Vec<u32>>)>,
}

fn classify(mesh: &LabeledMesh, frame: &Frame, loops: Vec<(Vec<u32>, f64)>) -> LoopSet {
    let perimeter = loops
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let mut outlines = Vec::new();
    let mut holes: Vec<(Vec<u32>, f64, Vec<Vec<u32>>)> = Vec::new();
    let mut ccw = Vec::new();
    for (i, (verts, area)) in loops.into_iter().enumerate() {
        if Some(i) == perimeter {
            outlines.push(verts);
        } else if area < 0.0 {
            let mut v = verts;
            v.reverse();
            holes.push((v, -area, Vec::new()));
        } else {
            ccw.push(verts);
        }
    }
    let poly = |v: &[u32]| -> Vec<Vec2> {
        v.iter()
            .map(|&i| frame.project(&mesh.vertices[i as usize]))
            .collect()
    };
    for island in ccw {
        let p = frame.project(&mesh.vertices[island[0] as usize]);
        let host = holes
            .iter()
            .enumerate()
            .filter(|(_, h)| point_in_polygon(p, &poly(&h.0)))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i);
        match host {
            Some(h) => holes[h].2.push(island),
            None => outlines.push(island),
        }
    }
    LoopSet {
        outlines,
        holes: holes.into_iter().map(|(v, _, i)| (v, i)).collect(),
    }
}

/// Interior hole loops of one element, counter-clockwise in `frame`. The
/// element's outline (largest loop) is excluded.
pub fn extract_hole_boundaries(
    mesh: &LabeledMesh,
    label: Label,
    frame: &Frame,
) -> Result<Vec<BoundaryLoop>, ReconstructionError> {
    let set = classify(mesh, frame, walk_loops(mesh, label, frame)?);
    Ok(set
        .holes
        .into_iter()
        .map(|(vertices, islands)| BoundaryLoop {
            element: label,
            vertices,
            islands,
            closure: Vec::new(),
        })
        .collect())
}

fn element_vertices(mesh: &LabeledMesh, label: Label, frame: &Frame) -> Vec<(u32, Vec2)> {
    let mut vs: Vec<u32> = (0..mesh.face_count())
        .filter(|&f| mesh.labels[f] == label)
        .flat_map(|f| mesh.triangles[f])
        .collect();
    vs.sort_unstable();
    vs.dedup();
    vs.into_iter()
        .map(|v| (v, frame.project(&mesh.vertices[v as usize])))
        .collect()
}

/// `chain` (positions `poly`) closed through `corner`: clockwise, simple, and
/// enclosing no element vertex off the chain.
fn corner_closure_is_clean(
    poly: &[Vec2],
    corner: Vec2,
    chain: &[u32],
    element: &[(u32, Vec2)],
) -> bool {
    let n = poly.len();
    let mut closed = poly.to_vec();
    closed.push(corner);
    if !(polygon_area(&closed) < -1e-12) {
        return false;
    }
    let (first, last) = (poly[0], poly[n - 1]);
    for k in 0..n - 1 {
        let (a, b) = (poly[k], poly[k + 1]);
        // Skip chain edges sharing an endpoint with a closure segment.
        if k + 1 < n - 1 && segments_intersect(a, b, last, corner) {
            return false;
        }
        if k > 0 && segments_intersect(a, b, corner, first) {
            return false;
        }
    }
    let on_chain: BTreeSet<u32> = chain.iter().copied().collect();
    !element
        .iter()
        .any(|(v, p)| !on_chain.contains(v) && point_in_polygon(*p, &closed))
}

/// Result of scanning an element outline for notches.
#[derive(Clone, Debug, Default)]
pub struct NotchScan {
    pub notches: Vec<BoundaryLoop>,
    /// Clockwise outline chains that could not be closed by one line or a
    /// single three-plane corner.
    pub unsupported: Vec<Vec<u32>>,
}

/// Finds notches: outline chains that leave a neighbor intersection line and
/// come back to it (or to a second line meeting the first at a corner) while
/// enclosing no element faces.
///
/// `element` indexes `segments`; `edges` are the intersection edges incident
/// to it. A vertex is anchored to a line when it lies within `tol` of the
/// line and of its active extent.
pub fn find_notches(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    element: usize,
    frame: &Frame,
    edges: &[IntersectionEdge],
    tol: f64,
) -> Result<NotchScan, ReconstructionError> {
    let label = segments[element].label();
    let set = classify(mesh, frame, walk_loops(mesh, label, frame)?);
    let mut scan = NotchScan::default();
    let by_neighbor: BTreeMap<usize, &IntersectionEdge> =
        edges.iter().map(|e| (e.other(element), e)).collect();
    let mut element_points: Option<Vec<(u32, Vec2)>> = None;
    for outline in &set.outlines {
        let n = outline.len();
        let anchors: Vec<Vec<usize>> = outline
            .iter()
            .map(|&v| {
                let p = mesh.vertices[v as usize];
                by_neighbor
                    .iter()
                    .filter(|(_, e)| e.holds(&p, tol))
                    .map(|(&k, _)| k)
                    .collect()
            })
            .collect();
        let anchored: Vec<usize> = (0..n).filter(|&i| !anchors[i].is_empty()).collect();
        if anchored.len() < 2 {
            continue;
        }
        let pos = |v: u32| frame.project(&mesh.vertices[v as usize]);
        // Outline edges running along each line; a closure may not cover them.
        let param = |line: usize, t: usize| {
            by_neighbor[&line]
                .line
                .param(&mesh.vertices[outline[t] as usize])
        };
        let blocked = |line: usize, a: usize, b: usize| {
            let (lo, hi) = {
                let (x, y) = (param(line, a), param(line, b));
                (x.min(y), x.max(y))
            };
            (0..n).any(|t| {
                let u = (t + 1) % n;
                if !anchors[t].contains(&line) || !anchors[u].contains(&line) {
                    return false;
                }
                let (x, y) = (param(line, t), param(line, u));
                x.max(y).min(hi) - x.min(y).max(lo) > tol
            })
        };
        let m = anchored.len();
        for w in 0..m {
            let (mut i, mut j) = (anchored[w], anchored[(w + 1) % m]);
            let (sa, sb) = (&anchors[i], &anchors[j]);
            let common: Vec<usize> = sa.iter().copied().filter(|k| sb.contains(k)).collect();
            if (j + n - i) % n == 1 && !common.is_empty() {
                continue;
            }
            if let Some(&line) = common.first() {
                // A spike of faces touching the line inside the gap: widen
                // the chain to the nearest anchors that leave the gap free.
                if blocked(line, i, j) {
                    let back = (1..m)
                        .map(|b| anchored[(w + m - b) % m])
                        .take_while(|&s| anchors[s].contains(&line))
                        .find(|&s| !blocked(line, s, j));
                    let fwd = (2..m)
                        .map(|f| anchored[(w + f) % m])
                        .take_while(|&e| anchors[e].contains(&line))
                        .find(|&e| !blocked(line, i, e));
                    match (back, fwd) {
                        (Some(s), _) => i = s,
                        (None, Some(e)) => j = e,
                        (None, None) => {
                            let len = (j + n - i) % n;
                            let chain: Vec<u32> = (0..=len).map(|k| outline[(i + k) % n]).collect();
                            let poly: Vec<Vec2> = chain.iter().map(|&v| pos(v)).collect();
                            if polygon_area(&poly) < -1e-12 {
                                scan.unsupported.push(chain);
                            }
                            continue;
                        }
                    }
                }
            }
            let len = (j + n - i) % n;
            let chain: Vec<u32> = (0..=len).map(|k| outline[(i + k) % n]).collect();
            if chain[0] == chain[len] {
                continue;
            }
            let mut poly: Vec<Vec2> = chain.iter().map(|&v| pos(v)).collect();
            let closure = if let Some(&line) = common.first() {
                vec![line]
            } else {
                // Corner between the end's line and the start's line.
                let mut found = None;
                let mut beyond = None;
                'pairs: for &la in sb {
                    for &lb in sa {
                        if la == lb {
                            continue;
                        }
                        let Ok(c) = segment_corner(segments, [element, la, lb]) else {
                            continue;
                        };
                        if by_neighbor[&la].holds(&c.position, tol)
                            && by_neighbor[&lb].holds(&c.position, tol)
                        {
                            found = Some((la, lb, c.position));
                            break 'pairs;
                        }
                        beyond.get_or_insert((la, lb, c.position));
                    }
                }
                // The corner itself may have been cut away, leaving it past
                // the lines' surviving extents. Accept it only if closing
                // through it gives a simple notch with no element vertex inside.
                if found.is_none() {
                    if let Some((la, lb, c)) = beyond {
                        let pts = element_points
                            .get_or_insert_with(|| element_vertices(mesh, label, frame));
                        if corner_closure_is_clean(&poly, frame.project(&c), &chain, pts) {
                            found = Some((la, lb, c));
                        }
                    }
                }
                match found {
                    Some((la, lb, c)) => {
                        poly.push(frame.project(&c));
                        vec![lb, la]
                    }
                    None => {
                        if polygon_area(&poly) < -1e-12 {
                            scan.unsupported.push(chain);
                        }
                        continue;
                    }
                }
            };
            if polygon_area(&poly) < -1e-12 {
                let mut vertices = chain;
                vertices.reverse();
                scan.notches.push(BoundaryLoop {
                    element: label,
                    vertices,
                    islands: Vec::new(),
                    closure,
                });
            }
        }
    }
    Ok(scan)
}
