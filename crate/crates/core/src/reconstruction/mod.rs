//! Object removal and planar hole filling.
//!
//! Loose objects are removed group by group; every structural element that
//! lost faces gets its holes closed by a constrained Delaunay fill in its own
//! plane, clipped at the lines where it meets neighboring elements.

mod boundary;
pub mod cdt;
mod plan;
mod planes;
mod region;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{extract_hole_boundaries, find_notches, walk_loops, BoundaryLoop, NotchScan};
pub use cdt::{triangulate_polygon, Cdt, CdtError};
pub use plan::{plan_removal_order, remove_object_faces, RemovalPlan, RemovalRecord};
pub use planes::{
    intersect_planes, intersect_three, intersection_edges, segment_corner, CornerPoint,
    IntersectionEdge, Line3, MAX_CORNER_CONDITION,
};
pub use region::{
    clip_hole_region, fill_hole_cdt, ElementContext, FillPatch, HoleRegion, VertexSource, Welder,
};

use crate::geometry::{Frame, Vec3};
use crate::mesh::{ClassMap, Label, LabeledMesh};
use crate::segmentation::{object_bounding_boxes, ObjectBox, Plane, PlaneSegment, Segmentation};
use crate::uv_mapping::{orientation_axes, FrameAxes};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructionError {
    #[error("planes are parallel (angle {angle:.3} deg)")]
    NoIntersection { angle: f64 },
    #[error("degenerate corner (condition number {condition:e})")]
    DegenerateCorner { condition: f64 },
    #[error("non-manifold boundary at vertex {vertex}")]
    NonManifold { vertex: u32 },
    #[error("open boundary chain at vertex {vertex}")]
    OpenChain { vertex: u32 },
    #[error("clipping left an empty region")]
    EmptyRegion,
    #[error("triangulation failed: {0}")]
    Cdt(#[from] CdtError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructParams {
    /// Planes closer than this angle (degrees) have no intersection line.
    pub parallel_tol: f64,
    /// Distance (m) within which a vertex counts as lying on a neighbor line.
    pub line_tol: f64,
    /// New vertices within this distance (m) of an existing one are merged.
    pub weld_tol: f64,
    /// Optional interior refinement spacing (m); off by default.
    pub max_edge_length: Option<f64>,
    pub axes: FrameAxes,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        ReconstructParams {
            parallel_tol: 5.0,
            line_tol: 0.01,
            weld_tol: 1e-6,
            max_edge_length: None,
            axes: FrameAxes::default(),
        }
    }
}

/// Frame of a planar element: origin at the area-weighted centroid of its
/// faces (projected onto the plane), axes from the chart orientation rule.
pub fn element_frame(mesh: &LabeledMesh, seg: &PlaneSegment, axes: &FrameAxes) -> Frame {
    let plane = seg.plane();
    let label = seg.label();
    let (mut acc, mut total) = (Vec3::zeros(), 0.0);
    for f in 0..mesh.face_count() {
        if mesh.labels[f] == label {
            let a = mesh.face_area(f);
            acc += mesh.face_centroid(f) * a;
            total += a;
        }
    }
    let origin = if total > 0.0 {
        plane.project(&(acc / total))
    } else {
        plane.normal * plane.offset
    };
    let facing = seg.facing_normal();
    let (u, v) =
        orientation_axes(&facing, seg.orientation, axes).unwrap_or_else(|_| any_axes(&facing));
    Frame {
        origin,
        u,
        v,
        normal: facing,
    }
}

fn any_axes(n: &Vec3) -> (Vec3, Vec3) {
    let k = n.iamin();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    let v = (e - n * e.dot(n)).normalize();
    (v.cross(n), v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementFill {
    pub class: i64,
    pub instance: i64,
    pub faces: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenHole {
    pub class: i64,
    pub instance: i64,
    pub kind: String,
    pub vertices: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub groups: usize,
    pub removed_faces: usize,
    pub filled_faces: Vec<ElementFill>,
    pub open_holes: Vec<OpenHole>,
    pub failures: Vec<OpenHole>,
}

/// What a removal disturbed: vertices of removed faces and the removed boxes.
#[derive(Clone, Copy)]
struct Near<'a> {
    vertices: &'a BTreeSet<u32>,
    boxes: &'a [ObjectBox],
}

impl Near<'_> {
    /// The loop shares a vertex with a removed face or its bounds meet a
    /// removed box (holes already present under an object).
    fn hit(&self, lp: &[u32], mesh: &LabeledMesh, tol: f64) -> bool {
        if lp.iter().any(|v| self.vertices.contains(v)) {
            return true;
        }
        let Some(&first) = lp.first() else {
            return false;
        };
        let mut lo = mesh.vertices[first as usize];
        let mut hi = lo;
        for &v in lp {
            lo = lo.inf(&mesh.vertices[v as usize]);
            hi = hi.sup(&mesh.vertices[v as usize]);
        }
        self.boxes
            .iter()
            .any(|b| (0..3).all(|k| lo[k] <= b.max[k] + tol && b.min[k] <= hi[k] + tol))
    }
}

fn plane_meets_box(plane: &Plane, b: &ObjectBox, tol: f64) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..8 {
        let c = Vec3::new(
            if i & 1 == 0 { b.min.x } else { b.max.x },
            if i & 2 == 0 { b.min.y } else { b.max.y },
            if i & 4 == 0 { b.min.z } else { b.max.z },
        );
        let d = plane.signed_distance(&c);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    lo <= tol && hi >= -tol
}

#[derive(Clone, Copy)]
enum Select<'a> {
    /// Interior holes and notches near this removal.
    Touching(Near<'a>),
    /// Every interior hole, and notches near any removal.
    Final(Near<'a>),
}

struct ElementOutcome {
    patches: Vec<FillPatch>,
    failures: Vec<OpenHole>,
}

fn hole(label: Label, kind: &str, vertices: usize, reason: String) -> OpenHole {
    OpenHole {
        class: label.class,
        instance: label.instance,
        kind: kind.to_string(),
        vertices,
        reason,
    }
}

/// Vertices of `mesh` faces lying on each incident intersection line.
fn line_anchors(
    mesh: &LabeledMesh,
    element: usize,
    edges: &[IntersectionEdge],
    tol: f64,
) -> BTreeMap<usize, Vec<(u32, Vec3)>> {
    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    let mut out = BTreeMap::new();
    for e in edges {
        let list: Vec<(u32, Vec3)> = (0..mesh.vertices.len())
            .filter(|&i| used[i] && e.holds(&mesh.vertices[i], tol))
            .map(|i| (i as u32, mesh.vertices[i]))
            .collect();
        out.insert(e.other(element), list);
    }
    out
}

fn fill_element(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    element: usize,
    frame: &Frame,
    edges: &[IntersectionEdge],
    params: &ReconstructParams,
    select: Select,
) -> ElementOutcome {
    let label = segments[element].label();
    let mut out = ElementOutcome {
        patches: Vec::new(),
        failures: Vec::new(),
    };
    let holes = match extract_hole_boundaries(mesh, label, frame) {
        Ok(h) => h,
        Err(e) => {
            out.failures.push(hole(label, "element", 0, e.to_string()));
            return out;
        }
    };
    let scan = match find_notches(mesh, segments, element, frame, edges, params.line_tol) {
        Ok(s) => s,
        Err(e) => {
            out.failures.push(hole(label, "element", 0, e.to_string()));
            return out;
        }
    };
    let tol = params.line_tol;
    let mut loops: Vec<BoundaryLoop> = Vec::new();
    for h in holes {
        let keep = match select {
            Select::Touching(near) => near.hit(&h.vertices, mesh, tol),
            Select::Final(_) => true,
        };
        if keep {
            loops.push(h);
        }
    }
    let near = match select {
        Select::Touching(n) | Select::Final(n) => n,
    };
    for n in scan.notches {
        if near.hit(&n.vertices, mesh, tol) {
            loops.push(n);
        }
    }
    for u in scan.unsupported {
        if near.hit(&u, mesh, tol) {
            out.failures.push(hole(
                label,
                "notch",
                u.len(),
                "notch meets more than two neighbor lines".into(),
            ));
        }
    }
    if loops.is_empty() {
        return out;
    }
    let anchors = if loops.iter().any(|l| l.is_notch()) {
        line_anchors(mesh, element, edges, params.line_tol)
    } else {
        BTreeMap::new()
    };
    let ctx = ElementContext {
        index: element,
        label,
        frame: *frame,
        edges: edges.to_vec(),
        anchors,
        tol: params.line_tol,
    };
    for lp in &loops {
        let kind = if lp.is_notch() { "notch" } else { "interior" };
        let res = clip_hole_region(lp, &mesh.vertices, &ctx, segments)
            .and_then(|r| fill_hole_cdt(&r, frame, label, params.max_edge_length));
        match res {
            Ok(p) => out.patches.push(p),
            Err(e) => out
                .failures
                .push(hole(label, kind, lp.vertices.len(), e.to_string())),
        }
    }
    out
}

/// Removes loose objects group by group in plan order and fills the
/// resulting holes of every affected planar element.
///
/// `segmentation` is applied to `mesh` first (idempotent if already
/// applied). Elements within one group are filled concurrently from the
/// same snapshot; groups run strictly in sequence. Failures leave holes open
/// and are reported. Loose instances missing from the plan are removed in a
/// trailing group.
pub fn reconstruct_scene(
    mesh: &LabeledMesh,
    segmentation: &Segmentation,
    boxes: &[ObjectBox],
    plan: &RemovalPlan,
    class_map: &ClassMap,
    params: &ReconstructParams,
) -> (LabeledMesh, ReconstructionReport) {
    let base = segmentation.apply(mesh);
    let segments = &segmentation.segments;
    let index: HashMap<Label, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.label(), i))
        .collect();
    let unplaned: BTreeSet<Label> = segmentation.unplaned.iter().map(|u| u.label()).collect();
    let frames: Vec<Frame> = segments
        .iter()
        .map(|s| element_frame(&base, s, &params.axes))
        .collect();
    let all_edges = intersection_edges(&base, segments, params.parallel_tol, params.line_tol);
    let incident: Vec<Vec<IntersectionEdge>> = (0..segments.len())
        .map(|s| {
            all_edges
                .iter()
                .filter(|e| e.plane_a == s || e.plane_b == s)
                .copied()
                .collect()
        })
        .collect();

    let mut groups: Vec<Vec<ObjectBox>> = plan
        .groups
        .iter()
        .map(|g| {
            boxes
                .iter()
                .filter(|b| g.contains(&b.label()))
                .copied()
                .collect()
        })
        .collect();
    let planned: BTreeSet<Label> = plan.groups.iter().flatten().copied().collect();
    let mut rest: Vec<ObjectBox> = boxes
        .iter()
        .filter(|b| !planned.contains(&b.label()))
        .copied()
        .collect();
    let pad = boxes.first().map(|b| b.padding).unwrap_or(0.0);
    for b in object_bounding_boxes(&base, class_map, pad) {
        if !planned.contains(&b.label()) && !rest.iter().any(|r| r.label() == b.label()) {
            rest.push(b);
        }
    }
    if !rest.is_empty() {
        groups.push(rest);
    }

    let mut report = ReconstructionReport::default();
    let mut filled: BTreeMap<Label, usize> = BTreeMap::new();
    let mut cur = base;
    let mut touched_all: BTreeSet<u32> = BTreeSet::new();
    let mut unplaned_hit: BTreeMap<Label, usize> = BTreeMap::new();
    let mut removed_boxes: Vec<ObjectBox> = Vec::new();
    for gboxes in &groups {
        removed_boxes.extend(gboxes.iter().copied());
        report.groups += 1;
        let (next, rec) = remove_object_faces(&cur, gboxes, class_map);
        report.removed_faces += rec.removed.len();
        let touched = rec.vertices(&cur);
        touched_all.extend(touched.iter().copied());
        cur = next;
        let mut affected: Vec<usize> = Vec::new();
        for (label, faces) in &rec.structural {
            if let Some(&s) = index.get(label) {
                affected.push(s);
            } else if unplaned.contains(label) {
                *unplaned_hit.entry(*label).or_default() += faces.len();
            }
        }
        // Elements whose plane passes through a removed box may have holes
        // that were already open under the object.
        for (s, seg) in segments.iter().enumerate() {
            if gboxes
                .iter()
                .any(|b| plane_meets_box(&seg.plane(), b, params.line_tol))
            {
                affected.push(s);
            }
        }
        affected.sort_unstable();
        affected.dedup();
        let outcomes: Vec<ElementOutcome> = affected
            .par_iter()
            .map(|&s| {
                let near = Near {
                    vertices: &touched,
                    boxes: gboxes,
                };
                fill_element(
                    &cur,
                    segments,
                    s,
                    &frames[s],
                    &incident[s],
                    params,
                    Select::Touching(near),
                )
            })
            .collect();
        apply_outcomes(&mut cur, outcomes, params, &mut filled, &mut report);
    }

    // Final pass: remaining interior holes on every planar element.
    let outcomes: Vec<ElementOutcome> = (0..segments.len())
        .into_par_iter()
        .map(|s| {
            let near = Near {
                vertices: &touched_all,
                boxes: &removed_boxes,
            };
            fill_element(
                &cur,
                segments,
                s,
                &frames[s],
                &incident[s],
                params,
                Select::Final(near),
            )
        })
        .collect();
    let mut final_report = ReconstructionReport::default();
    apply_outcomes(&mut cur, outcomes, params, &mut filled, &mut final_report);
    // Anything that failed in the final pass stays open.
    report
        .open_holes
        .extend(final_report.failures.iter().cloned());
    report.failures.extend(final_report.failures);
    report.failures.sort_by_key(|a| (a.class, a.instance));
    report.failures.dedup();
    for (label, faces) in unplaned_hit {
        report.open_holes.push(hole(
            label,
            "unplaned",
            faces,
            "element has no plane".into(),
        ));
    }
    report.filled_faces = filled
        .into_iter()
        .map(|(l, faces)| ElementFill {
            class: l.class,
            instance: l.instance,
            faces,
        })
        .collect();
    if report.removed_faces > 0 {
        cur = cur.compact().0;
    }
    (cur, report)
}

fn apply_outcomes(
    mesh: &mut LabeledMesh,
    outcomes: Vec<ElementOutcome>,
    params: &ReconstructParams,
    filled: &mut BTreeMap<Label, usize>,
    report: &mut ReconstructionReport,
) {
    if outcomes
        .iter()
        .all(|o| o.patches.is_empty() && o.failures.is_empty())
    {
        return;
    }
    let mut welder = Welder::new(mesh, params.weld_tol);
    for o in outcomes {
        for p in &o.patches {
            let n = welder.apply(mesh, p);
            *filled.entry(p.label).or_default() += n;
        }
        report.failures.extend(o.failures);
    }
}

/// Open holes on planar elements: interior loops plus notches cut into
/// element outlines along neighbor lines (including unsupported ones).
pub fn count_open_holes(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    params: &ReconstructParams,
) -> usize {
    let edges = intersection_edges(mesh, segments, params.parallel_tol, params.line_tol);
    (0..segments.len())
        .into_par_iter()
        .map(|s| {
            let frame = element_frame(mesh, &segments[s], &params.axes);
            let incident: Vec<IntersectionEdge> = edges
                .iter()
                .filter(|e| e.plane_a == s || e.plane_b == s)
                .copied()
                .collect();
            let holes = extract_hole_boundaries(mesh, segments[s].label(), &frame)
                .map(|h| h.len())
                .unwrap_or(1);
            let notches = find_notches(mesh, segments, s, &frame, &incident, params.line_tol)
                .map(|n| n.notches.len() + n.unsupported.len())
                .unwrap_or(1);
            holes + notches
        })
        .sum()
}
