//! Plane/plane lines, three-plane corners and element adjacency lines.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::ReconstructionError;
use crate::geometry::Vec3;
use crate::mesh::LabeledMesh;
use crate::segmentation::{Plane, PlaneSegment};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line3 {
    pub point: Vec3,
    pub direction: Vec3,
}

impl Line3 {
    pub fn param(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.direction)
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.point + self.direction * t
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        (p - self.at(self.param(p))).norm()
    }
}

/// Line shared by two planes. `point` is the minimum-norm solution of both
/// plane equations.
pub fn intersect_planes(
    a: &Plane,
    b: &Plane,
    parallel_tol_deg: f64,
) -> Result<Line3, ReconstructionError> {
    let cross = a.normal.cross(&b.normal);
    let sin = cross.norm();
    let angle = sin.atan2(a.normal.dot(&b.normal).abs()).to_degrees();
    if angle < parallel_tol_deg || sin == 0.0 {
        return Err(ReconstructionError::NoIntersection { angle });
    }
    let direction = cross / sin;
    // x = alpha * na + beta * nb
    let g = a.normal.dot(&b.normal);
    let det = 1.0 - g * g;
    let alpha = (a.offset - g * b.offset) / det;
    let beta = (b.offset - g * a.offset) / det;
    let mut point = a.normal * alpha + b.normal * beta;
    // One Newton step on the residuals tightens the point for nearly
    // parallel planes.
    for _ in 0..2 {
        let ra = a.signed_distance(&point);
        let rb = b.signed_distance(&point);
        let da = (ra - g * rb) / det;
        let db = (rb - g * ra) / det;
        point -= a.normal * da + b.normal * db;
    }
    Ok(Line3 { point, direction })
}

/// Condition number above which three normals count as rank-deficient.
pub const MAX_CORNER_CONDITION: f64 = 1e6;

/// Point shared by three planes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerPoint {
    /// Indices of the three segments, ascending.
    pub planes: [usize; 3],
    pub position: Vec3,
}

pub fn intersect_three(a: &Plane, b: &Plane, c: &Plane) -> Result<Vec3, ReconstructionError> {
    let m = Matrix3::from_rows(&[
        a.normal.transpose(),
        b.normal.transpose(),
        c.normal.transpose(),
    ]);
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition < MAX_CORNER_CONDITION) {
        return Err(ReconstructionError::DegenerateCorner { condition });
    }
    let rhs = Vec3::new(a.offset, b.offset, c.offset);
    let lu = m.lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or(ReconstructionError::DegenerateCorner { condition })?;
    // Iterative refinement.
    for _ in 0..2 {
        let r = rhs - m * x;
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    Ok(x)
}

/// Corner of three segments, computed with the planes in ascending segment
/// order so every element sees bit-identical coordinates.
pub fn segment_corner(
    segments: &[PlaneSegment],
    ids: [usize; 3],
) -> Result<CornerPoint, ReconstructionError> {
    let mut planes = ids;
    planes.sort_unstable();
    let position = intersect_three(
        &segments[planes[0]].plane(),
        &segments[planes[1]].plane(),
        &segments[planes[2]].plane(),
    )?;
    Ok(CornerPoint { planes, position })
}

/// Intersection line of two adjacent elements with its active extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEdge {
    pub plane_a: usize,
    pub plane_b: usize,
    pub line: Line3,
    pub t_min: f64,
    pub t_max: f64,
}

impl IntersectionEdge {
    pub fn other(&self, s: usize) -> usize {
        if self.plane_a == s {
            self.plane_b
        } else {
            self.plane_a
        }
    }

    /// True when `p` lies within `tol` of the line and of its active extent.
    pub fn holds(&self, p: &Vec3, tol: f64) -> bool {
        let t = self.line.param(p);
        t >= self.t_min - tol && t <= self.t_max + tol && self.line.distance(p) <= tol
    }
}

/// Lines between every pair of non-parallel segments that share at least two
/// distinct vertices lying on both planes (within `tol`). The active extent
/// spans those shared vertices. Sorted by `(plane_a, plane_b)`.
pub fn intersection_edges(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    parallel_tol_deg: f64,
    tol: f64,
) -> Vec<IntersectionEdge> {
    let labels: std::collections::HashMap<_, usize> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (s.label(), i))
        .collect();
    let mut verts: Vec<Vec<u32>> = vec![Vec::new(); segments.len()];
    for (f, t) in mesh.triangles.iter().enumerate() {
        if let Some(&s) = labels.get(&mesh.labels[f]) {
            verts[s].extend_from_slice(t);
        }
    }
    for v in &mut verts {
        v.sort_unstable();
        v.dedup();
    }
    let mut out = Vec::new();
    for a in 0..segments.len() {
        for b in a + 1..segments.len() {
            let (pa, pb) = (segments[a].plane(), segments[b].plane());
            let Ok(line) = intersect_planes(&pa, &pb, parallel_tol_deg) else {
                continue;
            };
            let mut ts: Vec<f64> = Vec::new();
            let mut shared = 0usize;
            let mut seen = std::collections::BTreeSet::new();
            for &v in verts[a].iter().chain(&verts[b]) {
                let p = mesh.vertices[v as usize];
                if pa.signed_distance(&p).abs() <= tol
                    && pb.signed_distance(&p).abs() <= tol
                    && seen.insert(v)
                {
                    shared += 1;
                    ts.push(line.param(&p));
                }
            }
            if shared < 2 {
                continue;
            }
            let t_min = ts.iter().copied().fold(f64::INFINITY, f64::min);
            let t_max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if t_min < t_max {
                out.push(IntersectionEdge {
                    plane_a: a,
                    plane_b: b,
                    line,
                    t_min,
                    t_max,
                });
            }
        }
    }
    out
}
