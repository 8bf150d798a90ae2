//! Semantic seams, per-element chart unwrapping, orientation and distortion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Frame, Vec2, Vec3};
use crate::mesh::{build_adjacency, build_adjacency_for, EdgeKey, Label, LabeledMesh};
use crate::segmentation::{Orientation, PlaneSegment};

mod fallback;
mod svg;

pub use fallback::{unwrap_per_face, unwrap_unplaned};
pub use svg::charts_svg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UvError {
    #[error("reference axis is parallel to the element normal")]
    DegenerateFrame,
    #[error("face {face} folds over in the chart (signed area {area:e})")]
    FoldOver { face: u32, area: f64 },
    #[error("face {0} is degenerate")]
    DegenerateTriangle(u32),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// World reference directions: image-up for vertical elements, image-up
/// for horizontal elements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAxes {
    pub up: Vec3,
    pub forward: Vec3,
}

impl Default for FrameAxes {
    fn default() -> Self {
        FrameAxes {
            up: Vec3::z(),
            forward: Vec3::y(),
        }
    }
}

/// Chart axes `(u, v)` for an element whose faces look along `facing`.
///
/// `v` is the reference axis projected into the plane (world up for
/// vertical and slanted elements, forward for horizontal ones) and
/// `u = v × facing`, so `u × v = facing`.
pub fn orientation_axes(
    facing: &Vec3,
    orientation: Orientation,
    axes: &FrameAxes,
) -> Result<(Vec3, Vec3), UvError> {
    let n = facing.normalize();
    let reference = match orientation {
        Orientation::Horizontal => axes.forward,
        Orientation::Vertical | Orientation::Slanted => axes.up,
    };
    let r = reference.normalize();
    let p = r - n * r.dot(&n);
    let len = p.norm();
    if !(len > 1e-9) {
        return Err(UvError::DegenerateFrame);
    }
    let v = p / len;
    let u = v.cross(&n);
    Ok((u, v))
}

/// Undirected edges across which UVs are discontinuous.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeamSet {
    pub edges: BTreeSet<EdgeKey>,
}

impl SeamSet {
    pub fn contains(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&crate::mesh::edge_key(a, b))
    }
}

/// Marks every edge that is not shared by exactly two faces of one label.
pub fn mark_semantic_seams(mesh: &LabeledMesh) -> SeamSet {
    let adj = build_adjacency(mesh);
    let edges = adj
        .edges
        .iter()
        .filter(|(_, faces)| {
            faces.len() != 2 || mesh.labels[faces[0] as usize] != mesh.labels[faces[1] as usize]
        })
        .map(|(e, _)| *e)
        .collect();
    SeamSet { edges }
}

/// One connected UV island of a structural element.
///
/// Coordinates are chart-local: `frame.project(p) * texel_density` for
/// every corner, with the bounding box minimum at (0, 0). Before density
/// assignment `texel_density` is 1 and coordinates are meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UvChart {
    pub class: i64,
    pub instance: i64,
    /// Connected component index within the element.
    pub component: usize,
    pub orientation: Orientation,
    pub frame: Frame,
    pub texel_density: f64,
    /// Density asked for when the side cap forced a smaller one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_density: Option<f64>,
    pub face_ids: Vec<u32>,
    pub uvs: Vec<[[f64; 2]; 3]>,
    /// Bounding box extent in chart units.
    pub size: [f64; 2],
}

impl UvChart {
    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }

    /// Raster dimensions covering the chart, at least 1×1.
    pub fn raster_size(&self) -> (u32, u32) {
        let side = |s: f64| ((s - 1e-6).ceil().max(1.0)) as u32;
        (side(self.size[0]), side(self.size[1]))
    }

    /// Chart coordinate of a world point lying in the element plane.
    pub fn chart_point(&self, p: &Vec3) -> Vec2 {
        self.frame.project(p) * self.texel_density
    }

    /// Image of a world direction in chart axes (unnormalized).
    pub fn chart_direction(&self, d: &Vec3) -> Vec2 {
        Vec2::new(d.dot(&self.frame.u), d.dot(&self.frame.v))
    }
}

/// Projects the faces of `label` onto `frame` and splits them into one
/// chart per connected component (ascending smallest face id).
pub fn unwrap_faces(
    mesh: &LabeledMesh,
    label: Label,
    orientation: Orientation,
    frame: &Frame,
) -> Result<Vec<UvChart>, UvError> {
    let faces = mesh.faces_with_label(label);
    if faces.is_empty() {
        return Ok(Vec::new());
    }
    let comps = connected_components(mesh, &faces);
    let mut out = Vec::with_capacity(comps.len());
    for (component, ids) in comps.into_iter().enumerate() {
        let mut uvs = Vec::with_capacity(ids.len());
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for &f in &ids {
            let c = mesh.corners(f as usize);
            let q = c.map(|p| frame.project(&p));
            let area = crate::geometry::cross2(q[0], q[1], q[2]);
            if !(area > 0.0) {
                return Err(UvError::FoldOver {
                    face: f,
                    area: area / 2.0,
                });
            }
            for p in &q {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            uvs.push(q);
        }
        let origin = frame.lift(lo);
        let uvs = uvs
            .into_iter()
            .map(|q| q.map(|p| [p.x - lo.x, p.y - lo.y]))
            .collect();
        out.push(UvChart {
            class: label.class,
            instance: label.instance,
            component,
            orientation,
            frame: Frame { origin, ..*frame },
            texel_density: 1.0,
            requested_density: None,
            face_ids: ids,
            uvs,
            size: [hi.x - lo.x, hi.y - lo.y],
        });
    }
    Ok(out)
}

/// Rigid projection of an element onto the chart axes `(u, v)`.
///
/// `u × v` must equal the element's facing normal so counter-clockwise faces
/// stay counter-clockwise in the chart.
pub fn unwrap_element(
    mesh: &LabeledMesh,
    element: &PlaneSegment,
    axes: (Vec3, Vec3),
) -> Result<Vec<UvChart>, UvError> {
    let plane = element.plane();
    let frame = Frame {
        origin: plane.normal * plane.offset,
        u: axes.0,
        v: axes.1,
        normal: element.facing_normal(),
    };
    check_frame(&frame)?;
    unwrap_faces(mesh, element.label(), element.orientation, &frame)
}

fn check_frame(f: &Frame) -> Result<(), UvError> {
    let ok = (f.u.norm() - 1.0).abs() <= 1e-9
        && (f.v.norm() - 1.0).abs() <= 1e-9
        && f.u.dot(&f.v).abs() <= 1e-9
        && f.u.dot(&f.normal).abs() <= 1e-9
        && f.v.dot(&f.normal).abs() <= 1e-9;
    if ok {
        Ok(())
    } else {
        Err(UvError::DegenerateFrame)
    }
}

fn connected_components(mesh: &LabeledMesh, faces: &[usize]) -> Vec<Vec<u32>> {
    let adj = build_adjacency_for(mesh, faces.iter().copied());
    let index: BTreeMap<u32, usize> = faces
        .iter()
        .enumerate()
        .map(|(i, &f)| (f as u32, i))
        .collect();
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for fs in adj.edges.values() {
        if fs.len() == 2 {
            let (a, b) = (
                find(&mut parent, index[&fs[0]]),
                find(&mut parent, index[&fs[1]]),
            );
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for i in 0..faces.len() {
        let r = find(&mut parent, i);
        comps.entry(r).or_default().push(faces[i] as u32);
    }
    comps.into_values().collect()
}

/// Re-expresses a chart in the frame prescribed for its orientation.
/// Coordinates are rotated rigidly and re-anchored at (0, 0).
pub fn orient_chart(
    chart: &UvChart,
    orientation: Orientation,
    axes: &FrameAxes,
) -> Result<UvChart, UvError> {
    let (u, v) = orientation_axes(&chart.frame.normal, orientation, axes)?;
    let old = chart.frame;
    let map = |q: [f64; 2]| {
        let d = old.u * q[0] + old.v * q[1];
        Vec2::new(d.dot(&u), d.dot(&v))
    };
    let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
    let rotated: Vec<[Vec2; 3]> = chart
        .uvs
        .iter()
        .map(|t| {
            let r = t.map(map);
            for p in &r {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            r
        })
        .collect();
    for (t, &f) in rotated.iter().zip(&chart.face_ids) {
        let area = crate::geometry::cross2(t[0], t[1], t[2]);
        if !(area > 0.0) {
            return Err(UvError::FoldOver {
                face: f,
                area: area / 2.0,
            });
        }
    }
    // lo is in chart units; the frame origin is in meters.
    let k = 1.0 / chart.texel_density;
    let origin = old.origin + u * (lo.x * k) + v * (lo.y * k);
    Ok(UvChart {
        orientation,
        frame: Frame {
            origin,
            u,
            v,
            normal: old.normal,
        },
        uvs: rotated
            .iter()
            .map(|t| t.map(|p| [p.x - lo.x, p.y - lo.y]))
            .collect(),
        size: [hi.x - lo.x, hi.y - lo.y],
        ..chart.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionStats {
    /// L2 stretch per chart face, in chart order.
    pub per_face: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Area-weighted mean.
    pub mean: f64,
}

/// L2 stretch `sqrt((σ1² + σ2²) / 2)` of each face's 3D to chart map, with
/// chart units divided by the texel density so an isometry gives 1.
pub fn compute_distortion(mesh: &LabeledMesh, chart: &UvChart) -> Result<DistortionStats, UvError> {
    let mut per_face = Vec::with_capacity(chart.face_ids.len());
    let (mut acc, mut total) = (0.0, 0.0);
    for (&f, q) in chart.face_ids.iter().zip(&chart.uvs) {
        let [a, b, c] = mesh.corners(f as usize);
        let e1 = b - a;
        let e2 = c - a;
        let x = e1.normalize();
        let n = e1.cross(&e2);
        let area3 = n.norm() / 2.0;
        if !(area3 > 0.0) || !x.iter().all(|v| v.is_finite()) {
            return Err(UvError::DegenerateTriangle(f));
        }
        let y = n.normalize().cross(&x);
        // 3D triangle in its own orthonormal basis.
        let p = nalgebra::Matrix2::new(e1.dot(&x), e2.dot(&x), e1.dot(&y), e2.dot(&y));
        let k = 1.0 / chart.texel_density;
        let t = nalgebra::Matrix2::new(
            (q[1][0] - q[0][0]) * k,
            (q[2][0] - q[0][0]) * k,
            (q[1][1] - q[0][1]) * k,
            (q[2][1] - q[0][1]) * k,
        );
        if !(t.determinant().abs() > 0.0) {
            return Err(UvError::DegenerateTriangle(f));
        }
        let inv = p.try_inverse().ok_or(UvError::DegenerateTriangle(f))?;
        let j = t * inv;
        let s = (j.norm_squared() / 2.0).sqrt();
        per_face.push(s);
        acc += s * area3;
        total += area3;
    }
    let min = per_face.iter().copied().fold(f64::INFINITY, f64::min);
    let max = per_face.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DistortionStats {
        per_face,
        min,
        max,
        mean: if total > 0.0 { acc / total } else { f64::NAN },
    })
}

/// Scales chart coordinates to `density` texels per meter; a chart whose
/// larger side would exceed `max_chart_texels` is scaled down uniformly to
/// fit and keeps the requested density in `requested_density`.
pub fn assign_texel_density(
    charts: &[UvChart],
    density: f64,
    max_chart_texels: u32,
) -> Result<Vec<UvChart>, UvError> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(UvError::InvalidParams(format!("texel density {density}")));
    }
    if max_chart_texels == 0 {
        return Err(UvError::InvalidParams("max_chart_texels is 0".into()));
    }
    Ok(charts
        .iter()
        .map(|c| {
            let meters = [c.size[0] / c.texel_density, c.size[1] / c.texel_density];
            let side = meters[0].max(meters[1]);
            let cap = max_chart_texels as f64;
            let (eff, requested) = if side * density > cap {
                (cap / side, Some(density))
            } else {
                (density, None)
            };
            let k = eff / c.texel_density;
            UvChart {
                texel_density: eff,
                requested_density: requested,
                uvs: c
                    .uvs
                    .iter()
                    .map(|t| t.map(|p| [p[0] * k, p[1] * k]))
                    .collect(),
                size: [meters[0] * eff, meters[1] * eff],
                ..c.clone()
            }
        })
        .collect())
}

/// Fraction of same-label face pairs sharing a 3D edge that lie in one
/// chart and share that edge in 2D (within 1e-6 chart units). 1 when the
/// mesh has no such pairs.
pub fn adjacency_preservation(mesh: &LabeledMesh, charts: &[UvChart]) -> f64 {
    let mut place: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (ci, c) in charts.iter().enumerate() {
        for (k, &f) in c.face_ids.iter().enumerate() {
            place.insert(f, (ci, k));
        }
    }
    let corner_uv = |f: u32, v: u32| -> Option<(usize, [f64; 2])> {
        let &(ci, k) = place.get(&f)?;
        let t = mesh.triangles[f as usize];
        let i = t.iter().position(|&x| x == v)?;
        Some((ci, charts[ci].uvs[k][i]))
    };
    let adj = build_adjacency(mesh);
    let (mut total, mut kept) = (0usize, 0usize);
    for (&(a, b), faces) in &adj.edges {
        for i in 0..faces.len() {
            for j in i + 1..faces.len() {
                let (f, g) = (faces[i], faces[j]);
                if mesh.labels[f as usize] != mesh.labels[g as usize] {
                    continue;
                }
                total += 1;
                let same = (|| {
                    let (cf, fa) = corner_uv(f, a)?;
                    let (cg, ga) = corner_uv(g, a)?;
                    let (_, fb) = corner_uv(f, b)?;
                    let (_, gb) = corner_uv(g, b)?;
                    let close = |p: [f64; 2], q: [f64; 2]| {
                        (p[0] - q[0]).abs() <= 1e-6 && (p[1] - q[1]).abs() <= 1e-6
                    };
                    Some(cf == cg && close(fa, ga) && close(fb, gb))
                })()
                .unwrap_or(false);
                if same {
                    kept += 1;
                }
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        kept as f64 / total as f64
    }
}
