//! Planar refinement of structural labels and loose-object bounding boxes.

mod ransac;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{derive_seed, Vec3};
use crate::mesh::{ClassMap, Label, LabeledMesh};

pub use ransac::{extract_planes, face_samples, fit_plane_ransac, refit_plane, FaceSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("too few samples: need 3 non-collinear points, got {0}")]
    TooFewSamples(usize),
    #[error("no plane with at least {min} inliers (best had {best})")]
    NoPlane { min: usize, best: usize },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
}

/// Plane `normal · x = offset` with a unit, sign-canonical normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Normalizes and canonicalizes: the largest-magnitude component of the
    /// normal is made positive (first such axis on ties).
    pub fn new(normal: Vec3, offset: f64) -> Option<Plane> {
        let len = normal.norm();
        if !(len > 0.0) || !len.is_finite() {
            return None;
        }
        let (mut n, mut d) = (normal / len, offset / len);
        let mut axis = 0;
        for k in 1..3 {
            if n[k].abs() > n[axis].abs() {
                axis = k;
            }
        }
        if n[axis] < 0.0 {
            n = -n;
            d = -d;
        }
        Some(Plane {
            normal: n,
            offset: d,
        })
    }

    pub fn through(point: &Vec3, normal: Vec3) -> Option<Plane> {
        let len = normal.norm();
        if !(len > 0.0) {
            return None;
        }
        let n = normal / len;
        Plane::new(n, n.dot(point))
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    /// Max centroid-to-plane distance for an inlier, meters.
    pub inlier_dist: f64,
    pub max_iterations: usize,
    pub min_inlier_faces: usize,
    /// Max angle between face normal and plane normal, degrees.
    pub normal_agreement: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_dist: 0.02,
            max_iterations: 1000,
            min_inlier_faces: 20,
            normal_agreement: 30.0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let bad = |m: &str| Err(SegmentationError::InvalidParams(m.to_string()));
        if !(self.inlier_dist > 0.0) {
            return bad("inlier_dist must be > 0");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1");
        }
        if self.min_inlier_faces < 3 {
            return bad("min_inlier_faces must be >= 3");
        }
        if !(self.normal_agreement > 0.0 && self.normal_agreement <= 90.0) {
            return bad("normal_agreement must be in (0, 90]");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Vertical,
    Horizontal,
    Slanted,
}

/// Horizontal when the normal is within `vertical_angle` of ±up, Vertical
/// when within `vertical_angle` of perpendicular, Slanted otherwise.
pub fn classify_element_orientation(
    normal: &Vec3,
    up_axis: &Vec3,
    vertical_angle: f64,
) -> Orientation {
    let c = (normal.dot(up_axis) / (normal.norm() * up_axis.norm())).clamp(-1.0, 1.0);
    let theta = c.acos().to_degrees();
    if theta <= vertical_angle || theta >= 180.0 - vertical_angle {
        Orientation::Horizontal
    } else if (theta - 90.0).abs() <= vertical_angle {
        Orientation::Vertical
    } else {
        Orientation::Slanted
    }
}

/// One planar structural element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSegment {
    pub class: i64,
    pub instance: i64,
    pub normal: Vec3,
    pub offset: f64,
    pub orientation: Orientation,
    /// +1 when the element's faces wind counter-clockwise about `normal`, -1 otherwise.
    #[serde(default = "default_facing")]
    pub facing: f64,
    pub face_ids: Vec<u32>,
}

fn default_facing() -> f64 {
    1.0
}

impl PlaneSegment {
    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }

    pub fn plane(&self) -> Plane {
        Plane {
            normal: self.normal,
            offset: self.offset,
        }
    }

    /// Normal pointing to the side the faces look at.
    pub fn facing_normal(&self) -> Vec3 {
        self.normal * self.facing
    }
}

/// Faces of a structural group that no plane could claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnplanedGroup {
    pub class: i64,
    pub instance: i64,
    /// The group label the faces carried before refinement.
    pub source_instance: i64,
    pub face_ids: Vec<u32>,
}

impl UnplanedGroup {
    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<PlaneSegment>,
    pub unplaned: Vec<UnplanedGroup>,
    pub warnings: Vec<String>,
}

impl Segmentation {
    /// Relabels faces so each segment and unplaned group is its own instance.
    pub fn apply(&self, mesh: &LabeledMesh) -> LabeledMesh {
        let mut out = mesh.clone();
        for s in &self.segments {
            for &f in &s.face_ids {
                out.labels[f as usize] = s.label();
            }
        }
        for u in &self.unplaned {
            for &f in &u.face_ids {
                out.labels[f as usize] = u.label();
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrientationParams {
    pub up_axis: Vec3,
    /// Degrees.
    pub vertical_angle: f64,
}

impl Default for OrientationParams {
    fn default() -> Self {
        OrientationParams {
            up_axis: Vec3::z(),
            vertical_angle: 30.0,
        }
    }
}

struct GroupResult {
    label: Label,
    planes: Vec<(Plane, Vec<u32>)>,
    unplaned: Vec<u32>,
    warning: Option<String>,
}

/// Iterative RANSAC over every structural (class, instance) group.
///
/// The first plane of a group keeps the group's instance id; further planes
/// and the group's unplaned faces get fresh ids above the mesh maximum,
/// handed out in ascending group order.
pub fn segment_structural_planes(
    mesh: &LabeledMesh,
    class_map: &ClassMap,
    params: &RansacParams,
    orient: &OrientationParams,
    seed: u64,
) -> Result<Segmentation, SegmentationError> {
    params.validate()?;
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (f, l) in mesh.labels.iter().enumerate() {
        if class_map.is_structural(l.class) {
            groups.entry(*l).or_default().push(f);
        }
    }
    let groups: Vec<(Label, Vec<usize>)> = groups.into_iter().collect();

    let results: Vec<GroupResult> = groups
        .par_iter()
        .map(|(label, faces)| {
            let group_seed = derive_seed(seed, &[label.class, label.instance]);
            segment_group(mesh, *label, faces, params, group_seed)
        })
        .collect();

    let mut next_instance = mesh.labels.iter().map(|l| l.instance).max().unwrap_or(0) + 1;
    let mut seg = Segmentation::default();
    for r in results {
        if let Some(w) = r.warning {
            log::warn!("{w}");
            seg.warnings.push(w);
        }
        for (k, (plane, faces)) in r.planes.into_iter().enumerate() {
            let instance = if k == 0 {
                r.label.instance
            } else {
                next_instance += 1;
                next_instance - 1
            };
            let facing = facing_sign(mesh, &plane, &faces);
            seg.segments.push(PlaneSegment {
                class: r.label.class,
                instance,
                normal: plane.normal,
                offset: plane.offset,
                orientation: classify_element_orientation(
                    &plane.normal,
                    &orient.up_axis,
                    orient.vertical_angle,
                ),
                facing,
                face_ids: faces,
            });
        }
        if !r.unplaned.is_empty() {
            seg.unplaned.push(UnplanedGroup {
                class: r.label.class,
                instance: next_instance,
                source_instance: r.label.instance,
                face_ids: r.unplaned,
            });
            next_instance += 1;
        }
    }
    Ok(seg)
}

fn segment_group(
    mesh: &LabeledMesh,
    label: Label,
    faces: &[usize],
    params: &RansacParams,
    seed: u64,
) -> GroupResult {
    let samples = face_samples(mesh, faces);
    let (planes, leftover) = extract_planes(&samples, params, seed);
    if planes.is_empty() {
        return GroupResult {
            label,
            planes,
            unplaned: faces.iter().map(|&f| f as u32).collect(),
            warning: Some(format!(
                "structural group {label} ({} faces): no plane found, faces left unplaned",
                faces.len()
            )),
        };
    }
    let mut planes = planes;
    let mut unplaned = Vec::new();
    for s in leftover {
        let best = planes
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (i, p.signed_distance(&s.centroid).abs()))
            .filter(|&(_, d)| d <= 3.0 * params.inlier_dist)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, _)) => planes[i].1.push(s.face),
            None => unplaned.push(s.face),
        }
    }
    for (_, f) in &mut planes {
        f.sort_unstable();
    }
    unplaned.sort_unstable();
    GroupResult {
        label,
        planes,
        unplaned,
        warning: None,
    }
}

fn facing_sign(mesh: &LabeledMesh, plane: &Plane, faces: &[u32]) -> f64 {
    let mut acc = 0.0;
    for &f in faces {
        let [a, b, c] = mesh.corners(f as usize);
        acc += (b - a).cross(&(c - a)).dot(&plane.normal);
    }
    if acc < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Axis-aligned box around one loose instance, already padded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub class: i64,
    pub instance: i64,
    pub min: Vec3,
    pub max: Vec3,
    pub padding: f64,
}

impl ObjectBox {
    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Closed-interval overlap; touching boxes overlap.
    pub fn overlaps(&self, o: &ObjectBox) -> bool {
        (0..3).all(|k| self.min[k] <= o.max[k] && o.min[k] <= self.max[k])
    }

    pub fn volume(&self) -> f64 {
        (0..3)
            .map(|k| (self.max[k] - self.min[k]).max(0.0))
            .product()
    }

    /// Box grown by `margin` on all sides.
    pub fn expanded(&self, margin: f64) -> ObjectBox {
        let m = Vec3::repeat(margin);
        ObjectBox {
            min: self.min - m,
            max: self.max + m,
            ..*self
        }
    }
}

/// One box per loose (class, instance), ascending by label.
pub fn object_bounding_boxes(
    mesh: &LabeledMesh,
    class_map: &ClassMap,
    padding: f64,
) -> Vec<ObjectBox> {
    let mut bounds: BTreeMap<Label, (Vec3, Vec3)> = BTreeMap::new();
    for (f, l) in mesh.labels.iter().enumerate() {
        if !class_map.is_loose(l.class) {
            continue;
        }
        let e = bounds
            .entry(*l)
            .or_insert((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)));
        for p in mesh.corners(f) {
            e.0 = e.0.inf(&p);
            e.1 = e.1.sup(&p);
        }
    }
    let pad = Vec3::repeat(padding.max(0.0));
    bounds
        .into_iter()
        .map(|(l, (lo, hi))| ObjectBox {
            class: l.class,
            instance: l.instance,
            min: lo - pad,
            max: hi + pad,
            padding: padding.max(0.0),
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::{CLASS_FLOOR, CLASS_FURNITURE, CLASS_WALL};

    #[test]
    fn plane_canonical_sign() {
        let p = Plane::new(Vec3::new(0.0, 0.0, -2.0), -4.0).unwrap();
        assert_eq!(p.normal, Vec3::z());
        assert_eq!(p.offset, 2.0);
        assert!(Plane::new(Vec3::zeros(), 1.0).is_none());
    }

    #[test]
    fn orientation_cases() {
        let up = Vec3::z();
        assert_eq!(
            classify_element_orientation(&Vec3::z(), &up, 30.0),
            Orientation::Horizontal
        );
        assert_eq!(
            classify_element_orientation(&Vec3::x(), &up, 30.0),
            Orientation::Vertical
        );
        let diag = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert_eq!(
            classify_element_orientation(&diag, &up, 30.0),
            Orientation::Slanted
        );
        assert_eq!(
            classify_element_orientation(&-Vec3::z(), &up, 30.0),
            Orientation::Horizontal
        );
    }

    #[test]
    fn params_validation() {
        assert!(RansacParams::default().validate().is_ok());
        let p = RansacParams {
            min_inlier_faces: 2,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = RansacParams {
            normal_agreement: 95.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    fn cube_object(origin: Vec3, label: Label) -> (Vec<Vec3>, Vec<[u32; 3]>, Vec<Label>) {
        let v: Vec<Vec3> = (0..8)
            .map(|i| {
                origin + Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)
            })
            .collect();
        let t = vec![[0, 1, 2], [1, 3, 2], [4, 6, 5], [5, 6, 7]];
        (v, t, vec![label; 4])
    }

    #[test]
    fn boxes_for_loose_instances() {
        let (v, t, l) = cube_object(Vec3::zeros(), Label::new(CLASS_FURNITURE, 1));
        let m = LabeledMesh::new(v, t, l).unwrap();
        let boxes = object_bounding_boxes(&m, &ClassMap::default(), 0.05);
        assert_eq!(boxes.len(), 1);
        assert!((boxes[0].min - Vec3::repeat(-0.05)).norm() < 1e-15);
        assert!((boxes[0].max - Vec3::repeat(1.05)).norm() < 1e-15);

        let (mut v, mut t, mut l) = cube_object(Vec3::zeros(), Label::new(CLASS_FURNITURE, 1));
        let (v2, t2, l2) = cube_object(Vec3::repeat(3.0), Label::new(CLASS_FURNITURE, 2));
        t.extend(t2.iter().map(|tri| tri.map(|i| i + 8)));
        v.extend(v2);
        l.extend(l2);
        let m = LabeledMesh::new(v, t, l).unwrap();
        assert_eq!(
            object_bounding_boxes(&m, &ClassMap::default(), 0.0).len(),
            2
        );
    }

    #[test]
    fn no_loose_faces_no_boxes() {
        let (v, t, l) = cube_object(Vec3::zeros(), Label::new(CLASS_WALL, 0));
        let m = LabeledMesh::new(v, t, l).unwrap();
        assert!(object_bounding_boxes(&m, &ClassMap::default(), 0.02).is_empty());
    }

    /// Regular grid of `n x n` quads on z = 0.
    pub(crate) fn floor_grid(n: usize, label: Label) -> LabeledMesh {
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Vec3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                t.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                t.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let nf = t.len();
        LabeledMesh::new(v, t, vec![label; nf]).unwrap()
    }

    #[test]
    fn flat_floor_is_one_segment() {
        let m = floor_grid(10, Label::new(CLASS_FLOOR, 0));
        let seg = segment_structural_planes(
            &m,
            &ClassMap::default(),
            &RansacParams::default(),
            &OrientationParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(seg.segments.len(), 1);
        assert_eq!(seg.segments[0].face_ids.len(), 200);
        assert_eq!(seg.segments[0].orientation, Orientation::Horizontal);
        assert_eq!(seg.segments[0].label(), Label::new(CLASS_FLOOR, 0));
        assert_eq!(seg.segments[0].facing, 1.0);
        assert!(seg.unplaned.is_empty());
    }

    #[test]
    fn loose_faces_are_ignored() {
        let m = floor_grid(10, Label::new(CLASS_FURNITURE, 0));
        let seg = segment_structural_planes(
            &m,
            &ClassMap::default(),
            &RansacParams::default(),
            &OrientationParams::default(),
            1,
        )
        .unwrap();
        assert!(seg.segments.is_empty());
        assert!(seg.unplaned.is_empty());
    }

    #[test]
    fn two_walls_in_one_label_split() {
        // An L of two perpendicular walls sharing one label.
        let label = Label::new(CLASS_WALL, 3);
        let a = floor_grid(8, label);
        let mut v = a.vertices.clone();
        let mut t = a.triangles.clone();
        let off = v.len() as u32;
        // second wall: rotate the grid into the plane x = 0
        for p in &a.vertices {
            v.push(Vec3::new(0.0, p.y, p.x + 0.05));
        }
        t.extend(a.triangles.iter().map(|tri| tri.map(|i| i + off)));
        // first wall rotated into y = 0
        for p in v.iter_mut().take(off as usize) {
            *p = Vec3::new(p.x + 0.05, 0.0, p.y + 0.05);
        }
        let nf = t.len();
        let m = LabeledMesh::new(v, t, vec![label; nf]).unwrap();
        let seg = segment_structural_planes(
            &m,
            &ClassMap::default(),
            &RansacParams::default(),
            &OrientationParams::default(),
            3,
        )
        .unwrap();
        assert_eq!(seg.segments.len(), 2);
        let d = seg.segments[0].normal.dot(&seg.segments[1].normal).abs();
        assert!(d < 1e-6, "normals not orthogonal: {d}");
        assert!(seg
            .segments
            .iter()
            .all(|s| s.orientation == Orientation::Vertical));
        let ids: Vec<i64> = seg.segments.iter().map(|s| s.instance).collect();
        assert!(ids.contains(&3));
        assert_ne!(ids[0], ids[1]);
    }
}
