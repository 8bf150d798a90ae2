//! Charts for faces that belong to no fitted plane.

use super::{orientation_axes, unwrap_faces, FrameAxes, UvChart};
use crate::geometry::{Frame, Vec2, Vec3};
use crate::mesh::{Label, LabeledMesh};
use crate::segmentation::{classify_element_orientation, Orientation};

/// Orthonormal `(u, v)` with `u × v = n` for orientation `o`, falling back to
/// an arbitrary in-plane basis when the reference axis is parallel to `n`.
fn axes_for(n: &Vec3, o: Orientation, axes: &FrameAxes) -> (Vec3, Vec3) {
    orientation_axes(n, o, axes).unwrap_or_else(|_| {
        let k = if n.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        let u = (k - n * k.dot(n)).normalize();
        (u, n.cross(&u))
    })
}

fn frame_for(n: Vec3, origin: Vec3, o: Orientation, axes: &FrameAxes) -> Frame {
    let (u, v) = axes_for(&n, o, axes);
    Frame {
        origin,
        u,
        v,
        normal: n,
    }
}

/// One chart per face, each projected on its own plane. Components number
/// the faces in ascending id order; degenerate faces are skipped.
pub fn unwrap_per_face(
    mesh: &LabeledMesh,
    label: Label,
    axes: &FrameAxes,
    vertical_angle: f64,
) -> Vec<UvChart> {
    let mut out = Vec::new();
    for f in mesh.faces_with_label(label) {
        let c = mesh.corners(f);
        let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
        if !(n.norm() > 0.0) {
            continue;
        }
        let n = n.normalize();
        let o = classify_element_orientation(&n, &axes.up, vertical_angle);
        let frame = frame_for(n, c[0], o, axes);
        let q = c.map(|p| frame.project(&p));
        let lo = q[0].inf(&q[1]).inf(&q[2]);
        let hi = q[0].sup(&q[1]).sup(&q[2]);
        let component = out.len();
        out.push(UvChart {
            class: label.class,
            instance: label.instance,
            component,
            orientation: o,
            frame: Frame {
                origin: frame.lift(lo),
                ..frame
            },
            texel_density: 1.0,
            requested_density: None,
            face_ids: vec![f as u32],
            uvs: vec![q.map(|p: Vec2| [p.x - lo.x, p.y - lo.y])],
            size: [hi.x - lo.x, hi.y - lo.y],
        });
    }
    out
}

/// Charts for a face group without a plane: a single projection on the
/// area-weighted mean plane when no face folds over, per-face charts
/// otherwise. The flag is true for the per-face fallback.
pub fn unwrap_unplaned(
    mesh: &LabeledMesh,
    label: Label,
    axes: &FrameAxes,
    vertical_angle: f64,
) -> (Vec<UvChart>, bool) {
    let faces = mesh.faces_with_label(label);
    let mut n = Vec3::zeros();
    let mut centroid = Vec3::zeros();
    let mut area = 0.0;
    for &f in &faces {
        let c = mesh.corners(f);
        let w = (c[1] - c[0]).cross(&(c[2] - c[0]));
        n += w;
        let a = w.norm();
        centroid += mesh.face_centroid(f) * a;
        area += a;
    }
    if n.norm() > 1e-12 * area.max(1e-300) && area > 0.0 {
        let n = n.normalize();
        let o = classify_element_orientation(&n, &axes.up, vertical_angle);
        let frame = frame_for(n, centroid / area, o, axes);
        if let Ok(charts) = unwrap_faces(mesh, label, o, &frame) {
            return (charts, false);
        }
    }
    (unwrap_per_face(mesh, label, axes, vertical_angle), true)
}
