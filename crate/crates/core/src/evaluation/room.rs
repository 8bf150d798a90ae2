//! Synthetic furnished rooms with exact ground truth.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{derive_seed, Frame, Vec2, Vec3};
use crate::mesh::{
    Label, LabeledMesh, TextureImage, CLASS_CEILING, CLASS_FLOOR, CLASS_FURNITURE, CLASS_WALL,
};
use crate::segmentation::{Orientation, Plane, PlaneSegment};

/// Analytic texture over element-local coordinates in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextureGen {
    Constant {
        rgb: [u8; 3],
    },
    /// Two-color bands of width `period / 2` running across direction `angle_deg`.
    Stripes {
        period: f64,
        angle_deg: f64,
        colors: [[u8; 3]; 2],
    },
    Checker {
        size: f64,
        colors: [[u8; 3]; 2],
    },
    /// Smoothly interpolated value noise on a lattice of spacing `scale`.
    Noise {
        seed: u64,
        scale: f64,
    },
}

impl TextureGen {
    pub fn color(&self, q: Vec2) -> [f64; 3] {
        let c = |rgb: &[u8; 3]| rgb.map(|v| v as f64);
        match self {
            TextureGen::Constant { rgb } => c(rgb),
            TextureGen::Stripes {
                period,
                angle_deg,
                colors,
            } => {
                let a = angle_deg.to_radians();
                let t = q.x * a.cos() + q.y * a.sin();
                let band = (t / (period / 2.0)).floor() as i64;
                c(&colors[band.rem_euclid(2) as usize])
            }
            TextureGen::Checker { size, colors } => {
                let k = (q.x / size).floor() as i64 + (q.y / size).floor() as i64;
                c(&colors[k.rem_euclid(2) as usize])
            }
            TextureGen::Noise { seed, scale } => {
                let (x, y) = (q.x / scale, q.y / scale);
                let (x0, y0) = (x.floor(), y.floor());
                let s = |t: f64| t * t * (3.0 - 2.0 * t);
                let (tx, ty) = (s(x - x0), s(y - y0));
                let node = |i: f64, j: f64| {
                    let h = derive_seed(*seed, &[i as i64, j as i64]);
                    [
                        (h & 0xff) as f64,
                        ((h >> 8) & 0xff) as f64,
                        ((h >> 16) & 0xff) as f64,
                    ]
                };
                let (a, b, cc, d) = (
                    node(x0, y0),
                    node(x0 + 1.0, y0),
                    node(x0, y0 + 1.0),
                    node(x0 + 1.0, y0 + 1.0),
                );
                let mut out = [0.0; 3];
                for k in 0..3 {
                    let top = a[k] * (1.0 - tx) + b[k] * tx;
                    let bot = cc[k] * (1.0 - tx) + d[k] * tx;
                    out[k] = top * (1.0 - ty) + bot * ty;
                }
                out
            }
        }
    }

    pub fn color_u8(&self, q: Vec2) -> [u8; 3] {
        self.color(q).map(|v| v.round().clamp(0.0, 255.0) as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxObject {
    pub min: [f64; 3],
    pub size: [f64; 3],
    #[serde(default = "default_object_class")]
    pub class: i64,
}

fn default_object_class() -> i64 {
    CLASS_FURNITURE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomSpec {
    /// Width (x), depth (y) and height (z) in meters.
    pub extents: [f64; 3],
    pub edge_length: f64,
    pub floor: TextureGen,
    pub ceiling: TextureGen,
    pub walls: TextureGen,
    pub objects: Vec<BoxObject>,
    /// Source atlas resolution in texels per meter.
    pub texel_density: f64,
    /// Rotation of the whole room about the vertical axis through its center.
    pub rotation_deg: f64,
    pub seed: u64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        RoomSpec {
            extents: [4.0, 3.0, 2.5],
            edge_length: 0.05,
            floor: TextureGen::Constant {
                rgb: [150, 120, 90],
            },
            ceiling: TextureGen::Constant {
                rgb: [235, 235, 230],
            },
            walls: TextureGen::Constant {
                rgb: [200, 200, 190],
            },
            objects: Vec::new(),
            texel_density: 256.0,
            rotation_deg: 0.0,
            seed: 0,
        }
    }
}

/// One planted structural element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthElement {
    pub class: i64,
    pub instance: i64,
    pub plane: Plane,
    pub facing: f64,
    pub orientation: Orientation,
    pub texture: TextureGen,
    /// Maps world points to the texture's element-local coordinates.
    pub texture_frame: Frame,
}

impl TruthElement {
    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }

    pub fn segment(&self) -> PlaneSegment {
        PlaneSegment {
            class: self.class,
            instance: self.instance,
            normal: self.plane.normal,
            offset: self.plane.offset,
            orientation: self.orientation,
            facing: self.facing,
            face_ids: Vec::new(),
        }
    }

    pub fn color_at(&self, p: &Vec3) -> [f64; 3] {
        self.texture.color(self.texture_frame.project(p))
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub spec: RoomSpec,
    pub elements: Vec<TruthElement>,
    /// The empty room, textured like the furnished one.
    pub mesh: LabeledMesh,
}

/// Serializable part of [`GroundTruth`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub spec: RoomSpec,
    pub elements: Vec<TruthElement>,
}

impl GroundTruth {
    pub fn to_file(&self) -> TruthFile {
        TruthFile {
            spec: self.spec.clone(),
            elements: self.elements.clone(),
        }
    }

    /// Rebuilds the truth from its file by regenerating the room; fails if
    /// the stored elements disagree with the regenerated ones.
    pub fn from_file(file: &TruthFile) -> Result<GroundTruth, EvalError> {
        let truth = generate_room(&file.spec)?.truth;
        if truth.elements != file.elements {
            return Err(EvalError::InvalidSpec(
                "truth elements do not match their spec".into(),
            ));
        }
        Ok(truth)
    }

    pub fn element(&self, label: Label) -> Option<&TruthElement> {
        self.elements.iter().find(|e| e.label() == label)
    }

    pub fn segments(&self) -> Vec<PlaneSegment> {
        self.elements.iter().map(|e| e.segment()).collect()
    }
}

pub struct Fixture {
    pub mesh: LabeledMesh,
    pub truth: GroundTruth,
}

/// Lattice axis as a signed unit step.
type Axis = [i64; 3];

struct ElementDef {
    label: Label,
    base: [i64; 3],
    a: Axis,
    b: Axis,
    texture: TextureGen,
}

fn cross(a: Axis, b: Axis) -> Axis {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn axis_len(a: Axis, n: [i64; 3]) -> i64 {
    (0..3).map(|k| a[k].abs() * n[k]).sum()
}

fn axis_vec(a: Axis) -> Vec3 {
    Vec3::new(a[0] as f64, a[1] as f64, a[2] as f64)
}

struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    labels: Vec<Label>,
    uvs: Vec<[[f64; 2]; 3]>,
}

impl Builder {
    fn push(&mut self, t: [u32; 3], l: Label, uv: [[f64; 2]; 3]) {
        self.triangles.push(t);
        self.labels.push(l);
        self.uvs.push(uv);
    }
}

struct Region {
    /// Top-left texel of the region core.
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

/// Texel margin around each source region so bilinear lookups stay inside it.
const BORDER: u32 = 2;

fn shelf_layout(sizes: &[(u32, u32)]) -> (Vec<Region>, u32, u32) {
    let total: u64 = sizes
        .iter()
        .map(|&(w, h)| (w + 2 * BORDER) as u64 * (h + 2 * BORDER) as u64)
        .sum();
    let widest = sizes.iter().map(|s| s.0 + 2 * BORDER).max().unwrap_or(1);
    let width = ((total as f64).sqrt().ceil() as u32)
        .max(widest)
        .next_power_of_two();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i].1), i));
    let mut out: Vec<Option<Region>> = (0..sizes.len()).map(|_| None).collect();
    let (mut x, mut y, mut row_h) = (0u32, 0u32, 0u32);
    for i in order {
        let (w, h) = (sizes[i].0 + 2 * BORDER, sizes[i].1 + 2 * BORDER);
        if x + w > width {
            x = 0;
            y += row_h;
            row_h = 0;
        }
        out[i] = Some(Region {
            x: x + BORDER,
            y: y + BORDER,
            w: sizes[i].0,
            h: sizes[i].1,
        });
        x += w;
        row_h = row_h.max(h);
    }
    let height = (y + row_h).max(1).next_power_of_two();
    (
        out.into_iter().map(|r| r.expect("placed")).collect(),
        width,
        height,
    )
}

impl RoomSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !self.extents.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(EvalError::InvalidSpec(format!(
                "extents {:?}",
                self.extents
            )));
        }
        if !(self.edge_length > 0.0) {
            return Err(EvalError::InvalidSpec(format!(
                "edge length {}",
                self.edge_length
            )));
        }
        if !(self.texel_density > 0.0) {
            return Err(EvalError::InvalidSpec(format!(
                "texel density {}",
                self.texel_density
            )));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let inside = (0..3).all(|k| {
                o.size[k] > 0.0
                    && o.min[k] >= -1e-9
                    && o.min[k] + o.size[k] <= self.extents[k] + 1e-9
            });
            if !inside {
                return Err(EvalError::ObjectOutsideRoom(i));
            }
        }
        Ok(())
    }
}

/// Builds the furnished room, its ground truth and a shared source atlas.
///
/// Labels: floor (2, 0), ceiling (3, 1), walls (1, 2..=5) and objects
/// (class, 100 + index). Structural faces whose centroid lies inside an
/// object box are deleted from the furnished mesh.
pub fn generate_room(spec: &RoomSpec) -> Result<Fixture, EvalError> {
    spec.validate()?;
    let [ew, ed, eh] = spec.extents;
    let n = [
        (ew / spec.edge_length).round().max(1.0) as i64,
        (ed / spec.edge_length).round().max(1.0) as i64,
        (eh / spec.edge_length).round().max(1.0) as i64,
    ];
    let step = Vec3::new(ew / n[0] as f64, ed / n[1] as f64, eh / n[2] as f64);
    let center = Vec3::new(ew / 2.0, ed / 2.0, 0.0);
    let rot = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), spec.rotation_deg.to_radians());
    let place = |p: Vec3| rot * (p - center) + center;

    let (x, y, z) = ([1, 0, 0], [0, 1, 0], [0, 0, 1]);
    let defs = [
        ElementDef {
            label: Label::new(CLASS_FLOOR, 0),
            base: [0, 0, 0],
            a: x,
            b: y,
            texture: spec.floor.clone(),
        },
        ElementDef {
            label: Label::new(CLASS_CEILING, 1),
            base: [0, 0, n[2]],
            a: y,
            b: x,
            texture: spec.ceiling.clone(),
        },
        ElementDef {
            label: Label::new(CLASS_WALL, 2),
            base: [0, 0, 0],
            a: z,
            b: x,
            texture: spec.walls.clone(),
        },
        ElementDef {
            label: Label::new(CLASS_WALL, 3),
            base: [n[0], 0, 0],
            a: z,
            b: y,
            texture: spec.walls.clone(),
        },
        ElementDef {
            label: Label::new(CLASS_WALL, 4),
            base: [0, n[1], 0],
            a: x,
            b: z,
            texture: spec.walls.clone(),
        },
        ElementDef {
            label: Label::new(CLASS_WALL, 5),
            base: [0, 0, 0],
            a: y,
            b: z,
            texture: spec.walls.clone(),
        },
    ];

    // Texture coordinates: the element's lattice axes sorted so `u` is the
    // horizontal axis with the smaller index and `v` the other one; vertical
    // walls use z as `v`.
    let tex_axes = |d: &ElementDef| -> (Axis, Axis) {
        let (a, b) = (d.a, d.b);
        if a == z || (b != z && a != x) {
            (b, a)
        } else {
            (a, b)
        }
    };

    let density = spec.texel_density;
    let sizes: Vec<(u32, u32)> = defs
        .iter()
        .map(|d| {
            let (tu, tv) = tex_axes(d);
            let lu = axis_vec(tu).dot(&Vec3::from(spec.extents));
            let lv = axis_vec(tv).dot(&Vec3::from(spec.extents));
            (
                ((lu * density) - 1e-6).ceil().max(1.0) as u32,
                ((lv * density) - 1e-6).ceil().max(1.0) as u32,
            )
        })
        .chain(spec.objects.iter().map(|_| (4, 4)))
        .collect();
    let (regions, aw, ah) = shelf_layout(&sizes);

    let mut atlas = TextureImage::filled(aw, ah, [0; 3]);
    let mut elements = Vec::with_capacity(defs.len());
    let origin_of = |d: &ElementDef| -> Vec3 {
        Vec3::new(
            d.base[0] as f64 * step.x,
            d.base[1] as f64 * step.y,
            d.base[2] as f64 * step.z,
        )
    };
    for (d, reg) in defs.iter().zip(&regions) {
        let (tu, tv) = tex_axes(d);
        let mut torigin = origin_of(d);
        // The texture origin sits at the element's lattice minimum.
        for k in 0..3 {
            if d.a[k] != 0 || d.b[k] != 0 {
                torigin[k] = 0.0;
            }
        }
        let (u3, v3) = (rot * axis_vec(tu), rot * axis_vec(tv));
        let facing_lat = cross(d.a, d.b);
        let facing = rot * axis_vec(facing_lat);
        let p0 = place(origin_of(d));
        let plane = Plane::through(&p0, facing).expect("unit normal");
        let sign = if plane.normal.dot(&facing) > 0.0 {
            1.0
        } else {
            -1.0
        };
        let tframe = Frame {
            origin: place(torigin),
            u: u3,
            v: v3,
            normal: u3.cross(&v3),
        };
        let orientation = if d.label.class == CLASS_WALL {
            Orientation::Vertical
        } else {
            Orientation::Horizontal
        };
        let te = TruthElement {
            class: d.label.class,
            instance: d.label.instance,
            plane,
            facing: sign,
            orientation,
            texture: d.texture.clone(),
            texture_frame: tframe,
        };
        for ry in 0..reg.h + 2 * BORDER {
            for rx in 0..reg.w + 2 * BORDER {
                let q = Vec2::new(
                    (rx as f64 - BORDER as f64 + 0.5) / density,
                    (reg.h as f64 - (ry as f64 - BORDER as f64) - 0.5) / density,
                );
                atlas.set_rgb(
                    reg.x - BORDER + rx,
                    reg.y - BORDER + ry,
                    te.texture.color_u8(q),
                );
            }
        }
        elements.push(te);
    }
    // Object regions: one flat color each.
    for (i, reg) in regions[defs.len()..].iter().enumerate() {
        let h = derive_seed(spec.seed, &[i as i64]);
        let rgb = [
            (h & 0xff) as u8,
            ((h >> 8) & 0xff) as u8,
            ((h >> 16) & 0xff) as u8,
        ];
        for ry in 0..reg.h + 2 * BORDER {
            for rx in 0..reg.w + 2 * BORDER {
                atlas.set_rgb(reg.x - BORDER + rx, reg.y - BORDER + ry, rgb);
            }
        }
    }
    let (awf, ahf) = (aw as f64, ah as f64);
    let uv_of = |reg: &Region, q: Vec2| -> [f64; 2] {
        let px = reg.x as f64 + q.x * density;
        let py = reg.y as f64 + reg.h as f64 - q.y * density;
        [px / awf, 1.0 - py / ahf]
    };

    let mut b = Builder {
        vertices: Vec::new(),
        triangles: Vec::new(),
        labels: Vec::new(),
        uvs: Vec::new(),
    };
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertex = |b: &mut Builder, l: [i64; 3]| -> u32 {
        *index.entry(l).or_insert_with(|| {
            let p = Vec3::new(
                l[0] as f64 * step.x,
                l[1] as f64 * step.y,
                l[2] as f64 * step.z,
            );
            b.vertices.push(place(p));
            (b.vertices.len() - 1) as u32
        })
    };
    for ((d, te), reg) in defs.iter().zip(&elements).zip(&regions) {
        let (na, nb) = (axis_len(d.a, n), axis_len(d.b, n));
        let at =
            |i: i64, j: i64| -> [i64; 3] { [0, 1, 2].map(|k| d.base[k] + d.a[k] * i + d.b[k] * j) };
        for j in 0..nb {
            for i in 0..na {
                let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                let idx = c.map(|l| vertex(&mut b, l));
                let uv = idx.map(|v| uv_of(reg, te.texture_frame.project(&b.vertices[v as usize])));
                b.push([idx[0], idx[1], idx[2]], d.label, [uv[0], uv[1], uv[2]]);
                b.push([idx[0], idx[2], idx[3]], d.label, [uv[0], uv[2], uv[3]]);
            }
        }
    }
    let structural_faces = b.triangles.len();
    let mut truth_mesh = LabeledMesh {
        vertices: b.vertices.clone(),
        triangles: b.triangles.clone(),
        labels: b.labels.clone(),
        is_new: vec![false; structural_faces],
        corner_uvs: Some(b.uvs.clone()),
        textures: Vec::new(),
        face_page: vec![0; structural_faces],
    };

    // Objects: closed boxes with outward faces and their own vertices.
    let mut boxes = Vec::new();
    for (oi, o) in spec.objects.iter().enumerate() {
        let label = Label::new(o.class, 100 + oi as i64);
        let reg = &regions[defs.len() + oi];
        let uv = uv_of(reg, Vec2::new(2.0 / density, 2.0 / density));
        let lo = Vec3::from(o.min);
        let size = Vec3::from(o.size);
        let m = [0, 1, 2].map(|k| (size[k] / spec.edge_length).ceil().max(1.0) as i64);
        let bstep = Vec3::new(
            size.x / m[0] as f64,
            size.y / m[1] as f64,
            size.z / m[2] as f64,
        );
        let mut local: HashMap<[i64; 3], u32> = HashMap::new();
        let faces: [([i64; 3], Axis, Axis); 6] = [
            ([0, 0, 0], y, x),
            ([0, 0, m[2]], x, y),
            ([0, 0, 0], x, z),
            ([0, m[1], 0], z, x),
            ([0, 0, 0], z, y),
            ([m[0], 0, 0], y, z),
        ];
        for (base, a, bb) in faces {
            let (na, nb) = (axis_len(a, m), axis_len(bb, m));
            for j in 0..nb {
                for i in 0..na {
                    let at = |i: i64, j: i64| -> [i64; 3] {
                        [0, 1, 2].map(|k| base[k] + a[k] * i + bb[k] * j)
                    };
                    let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                    let idx = c.map(|l| {
                        *local.entry(l).or_insert_with(|| {
                            let p = lo
                                + Vec3::new(
                                    l[0] as f64 * bstep.x,
                                    l[1] as f64 * bstep.y,
                                    l[2] as f64 * bstep.z,
                                );
                            b.vertices.push(place(p));
                            (b.vertices.len() - 1) as u32
                        })
                    });
                    b.push([idx[0], idx[1], idx[2]], label, [uv; 3]);
                    b.push([idx[0], idx[2], idx[3]], label, [uv; 3]);
                }
            }
        }
        boxes.push((lo, lo + size));
    }

    // Occluded structural faces: centroid inside a closed object box,
    // tested in the unrotated room frame.
    let inv = rot.inverse();
    let keep: Vec<bool> = (0..b.triangles.len())
        .map(|f| {
            if f >= structural_faces {
                return true;
            }
            let t = b.triangles[f];
            let c =
                (b.vertices[t[0] as usize] + b.vertices[t[1] as usize] + b.vertices[t[2] as usize])
                    / 3.0;
            let c0 = inv * (c - center) + center;
            !boxes
                .iter()
                .any(|(lo, hi)| (0..3).all(|k| c0[k] >= lo[k] - 1e-9 && c0[k] <= hi[k] + 1e-9))
        })
        .collect();
    let page = Arc::new(atlas);
    truth_mesh.textures = vec![page.clone()];
    let n_all = b.triangles.len();
    let full = LabeledMesh {
        vertices: b.vertices,
        triangles: b.triangles,
        labels: b.labels,
        is_new: vec![false; n_all],
        corner_uvs: Some(b.uvs),
        textures: vec![page],
        face_page: vec![0; n_all],
    };
    let furnished = if spec.objects.is_empty() {
        full
    } else {
        full.retain_faces(&keep)
    };
    debug_assert!(furnished.check().is_ok());
    Ok(Fixture {
        mesh: furnished,
        truth: GroundTruth {
            spec: spec.clone(),
            elements,
            mesh: truth_mesh,
        },
    })
}
