#![allow(dead_code)]

use defurnish::evaluation::{generate_room, BoxObject, Fixture, RoomSpec};
use std::path::{Path, PathBuf};

use defurnish::mesh::{save_mesh, ClassMap, Label, LabeledMesh, CLASS_FURNITURE};
use defurnish::reconstruction::{
    plan_removal_order, reconstruct_scene, ReconstructParams, ReconstructionReport, RemovalPlan,
};
use defurnish::segmentation::{
    object_bounding_boxes, segment_structural_planes, ObjectBox, OrientationParams, PlaneSegment,
    RansacParams, Segmentation,
};

pub fn small_room(rotation_deg: f64) -> RoomSpec {
    RoomSpec {
        extents: [2.0, 1.5, 1.2],
        edge_length: 0.1,
        texel_density: 64.0,
        rotation_deg,
        ..RoomSpec::default()
    }
}

pub fn furniture(min: [f64; 3], size: [f64; 3]) -> BoxObject {
    BoxObject {
        min,
        size,
        class: CLASS_FURNITURE,
    }
}

pub struct Prepared {
    pub fixture: Fixture,
    pub segmentation: Segmentation,
    pub boxes: Vec<ObjectBox>,
    pub class_map: ClassMap,
}

pub fn prepare(spec: &RoomSpec) -> Prepared {
    let fixture = generate_room(spec).unwrap();
    let class_map = ClassMap::default();
    let segmentation = segment_structural_planes(
        &fixture.mesh,
        &class_map,
        &RansacParams::default(),
        &OrientationParams::default(),
        42,
    )
    .unwrap();
    let boxes = object_bounding_boxes(&fixture.mesh, &class_map, 0.0);
    Prepared {
        fixture,
        segmentation,
        boxes,
        class_map,
    }
}

impl Prepared {
    pub fn run(&self, plan: &RemovalPlan) -> (LabeledMesh, ReconstructionReport) {
        reconstruct_scene(
            &self.fixture.mesh,
            &self.segmentation,
            &self.boxes,
            plan,
            &self.class_map,
            &ReconstructParams::default(),
        )
    }

    pub fn grouped(&self) -> RemovalPlan {
        plan_removal_order(&self.boxes)
    }
}

/// Order-independent description of a mesh: each triangle as its label and
/// corner coordinate bits, rotated to start at the smallest corner.
pub fn canonical_geometry(m: &LabeledMesh) -> Vec<(i64, i64, bool, [[u64; 3]; 3])> {
    let mut out: Vec<_> = (0..m.face_count())
        .map(|f| {
            let c = m
                .corners(f)
                .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]);
            let k = (0..3).min_by_key(|&i| c[i]).unwrap();
            let r = [c[k], c[(k + 1) % 3], c[(k + 2) % 3]];
            (m.labels[f].class, m.labels[f].instance, m.is_new[f], r)
        })
        .collect();
    out.sort();
    out
}

/// Permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// The full-size room: 4 x 3 x 2.5 m at 5 cm edges, textured, three boxes.
pub fn desk_room() -> RoomSpec {
    use defurnish::evaluation::TextureGen;
    RoomSpec {
        floor: TextureGen::Checker {
            size: 0.3,
            colors: [[150, 120, 90], [110, 85, 60]],
        },
        walls: TextureGen::Stripes {
            period: 0.25,
            angle_deg: 90.0,
            colors: [[200, 200, 190], [170, 175, 160]],
        },
        ceiling: TextureGen::Noise {
            seed: 7,
            scale: 0.5,
        },
        objects: vec![
            furniture([0.0, 0.8, 0.0], [0.9, 1.8, 0.8]),
            furniture([1.6, 1.1, 0.0], [1.2, 0.8, 0.75]),
            furniture([3.3, 2.4, 0.0], [0.7, 0.6, 1.9]),
        ],
        seed: 42,
        ..RoomSpec::default()
    }
}

/// Saves the fixture mesh as `<dir>/room.obj` (with sidecar); returns the
/// mesh and sidecar paths.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> (PathBuf, PathBuf) {
    let mesh = dir.join("room.obj");
    save_mesh(&fixture.mesh, &mesh).unwrap();
    let labels = defurnish::mesh::sidecar_path(&mesh);
    (mesh, labels)
}

pub fn segment_of(p: &Prepared, l: Label) -> &PlaneSegment {
    p.segmentation
        .segments
        .iter()
        .find(|s| s.label() == l)
        .unwrap()
}

/// Distinct vertices of new faces carrying `l`.
pub fn new_vertices(m: &LabeledMesh, l: Label) -> Vec<u32> {
    let mut v: Vec<u32> = (0..m.face_count())
        .filter(|&f| m.is_new[f] && m.labels[f] == l)
        .flat_map(|f| m.triangles[f])
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}
