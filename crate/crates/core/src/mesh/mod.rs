//! Labeled triangle meshes: representation, IO, adjacency and validation.

mod labels;
mod obj;
mod ply;
mod texture;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid3, triangle_area3, triangle_normal3, Vec3};

pub use labels::{
    read_sidecar, write_sidecar, ClassInfo, ClassKind, ClassMap, Label, Sidecar, CLASS_CEILING,
    CLASS_FLOOR, CLASS_FURNITURE, CLASS_UNKNOWN, CLASS_WALL,
};
pub use texture::TextureImage;

/// Default degeneracy threshold in square meters.
pub const DEFAULT_MIN_AREA: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        /// 1-based line for text formats, byte offset for binary PLY.
        line: usize,
        message: String,
    },
    #[error("label count mismatch: {labels} labels for {faces} faces")]
    LabelCountMismatch { labels: usize, faces: usize },
    #[error("face {face} references unknown class id {class}")]
    UnknownClass { face: usize, class: i64 },
    #[error("unsupported mesh format: {}", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

impl MeshError {
    pub(crate) fn from_io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            MeshError::NotFound(path.to_path_buf())
        } else {
            MeshError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    }
}

/// Marker for a face corner without texture coordinates.
pub const NO_UV: [f64; 2] = [f64::NAN, f64::NAN];

/// Indexed triangle mesh with per-face labels and per-corner UVs.
///
/// `textures` holds one image per atlas page; `face_page` selects the page
/// each face samples. Corners of faces without source UVs hold [`NO_UV`].
#[derive(Clone, Debug, Default)]
pub struct LabeledMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub labels: Vec<Label>,
    pub is_new: Vec<bool>,
    pub corner_uvs: Option<Vec<[[f64; 2]; 3]>>,
    pub textures: Vec<Arc<TextureImage>>,
    pub face_page: Vec<u32>,
}

impl LabeledMesh {
    /// Builds an untextured mesh and checks its invariants.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        labels: Vec<Label>,
    ) -> Result<Self, MeshError> {
        let n = triangles.len();
        let mesh = LabeledMesh {
            vertices,
            triangles,
            labels,
            is_new: vec![false; n],
            corner_uvs: None,
            textures: Vec::new(),
            face_page: vec![0; n],
        };
        mesh.check()?;
        Ok(mesh)
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn check(&self) -> Result<(), MeshError> {
        let n = self.triangles.len();
        let nv = self.vertices.len();
        for (f, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i as usize >= nv) {
                return Err(MeshError::Invalid(format!(
                    "face {f} index out of range ({nv} vertices)"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(MeshError::Invalid(format!("face {f} repeats a vertex")));
            }
        }
        if self.labels.len() != n {
            return Err(MeshError::LabelCountMismatch {
                labels: self.labels.len(),
                faces: n,
            });
        }
        if self.is_new.len() != n || self.face_page.len() != n {
            return Err(MeshError::Invalid("per-face array length mismatch".into()));
        }
        if let Some(uvs) = &self.corner_uvs {
            if uvs.len() != n {
                return Err(MeshError::Invalid(format!(
                    "{} uv triples for {n} faces",
                    uvs.len()
                )));
            }
        }
        if !self.textures.is_empty() {
            if let Some(f) = self
                .face_page
                .iter()
                .position(|&p| p as usize >= self.textures.len())
            {
                return Err(MeshError::Invalid(format!(
                    "face {f} refers to a missing page"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        let t = self.triangles[f];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        triangle_area3(&a, &b, &c)
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        centroid3(&a, &b, &c)
    }

    /// Unit normal, or zero for a degenerate face.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        let n = triangle_normal3(&a, &b, &c);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    /// True if the face carries finite source texture coordinates.
    pub fn has_uv(&self, f: usize) -> bool {
        match &self.corner_uvs {
            Some(uvs) => uvs[f].iter().all(|c| c[0].is_finite() && c[1].is_finite()),
            None => false,
        }
    }

    /// Keeps faces where `keep[f]` is true; vertices are left untouched.
    pub fn retain_faces(&self, keep: &[bool]) -> LabeledMesh {
        let pick = |f: &usize| keep[*f];
        let idx: Vec<usize> = (0..self.face_count()).filter(pick).collect();
        self.select_faces(&idx)
    }

    /// Submesh with the listed faces in the given order; vertices untouched.
    pub fn select_faces(&self, faces: &[usize]) -> LabeledMesh {
        LabeledMesh {
            vertices: self.vertices.clone(),
            triangles: faces.iter().map(|&f| self.triangles[f]).collect(),
            labels: faces.iter().map(|&f| self.labels[f]).collect(),
            is_new: faces.iter().map(|&f| self.is_new[f]).collect(),
            corner_uvs: self
                .corner_uvs
                .as_ref()
                .map(|u| faces.iter().map(|&f| u[f]).collect()),
            textures: self.textures.clone(),
            face_page: faces.iter().map(|&f| self.face_page[f]).collect(),
        }
    }

    /// Drops unreferenced vertices, preserving the order of the rest.
    /// Returns the mesh and the new-to-old vertex map.
    pub fn compact(&self) -> (LabeledMesh, Vec<u32>) {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i as usize] = true;
            }
        }
        let mut old_to_new = vec![u32::MAX; self.vertices.len()];
        let mut new_to_old = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                old_to_new[i] = new_to_old.len() as u32;
                new_to_old.push(i as u32);
            }
        }
        let mut out = self.clone();
        out.vertices = new_to_old
            .iter()
            .map(|&i| self.vertices[i as usize])
            .collect();
        for t in &mut out.triangles {
            for i in t.iter_mut() {
                *i = old_to_new[*i as usize];
            }
        }
        (out, new_to_old)
    }

    /// Distinct labels in ascending order.
    pub fn distinct_labels(&self) -> Vec<Label> {
        let mut v: Vec<Label> = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }

    /// Faces carrying `label`, ascending.
    pub fn faces_with_label(&self, label: Label) -> Vec<usize> {
        (0..self.face_count())
            .filter(|&f| self.labels[f] == label)
            .collect()
    }
}

/// Undirected edge keyed with the smaller vertex index first.
pub type EdgeKey = (u32, u32);

#[inline]
pub fn edge_key(a: u32, b: u32) -> EdgeKey {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edge to incident-face map.
#[derive(Clone, Debug, Default)]
pub struct FaceAdjacency {
    pub edges: BTreeMap<EdgeKey, Vec<u32>>,
}

impl FaceAdjacency {
    pub fn faces(&self, a: u32, b: u32) -> &[u32] {
        self.edges
            .get(&edge_key(a, b))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn non_manifold_edges(&self) -> Vec<EdgeKey> {
        self.edges
            .iter()
            .filter(|(_, f)| f.len() > 2)
            .map(|(e, _)| *e)
            .collect()
    }

    pub fn boundary_edges(&self) -> Vec<EdgeKey> {
        self.edges
            .iter()
            .filter(|(_, f)| f.len() == 1)
            .map(|(e, _)| *e)
            .collect()
    }

    pub fn is_non_manifold(&self, e: EdgeKey) -> bool {
        self.edges.get(&e).is_some_and(|f| f.len() > 2)
    }
}

pub fn build_adjacency(mesh: &LabeledMesh) -> FaceAdjacency {
    build_adjacency_for(mesh, 0..mesh.face_count())
}

/// Adjacency restricted to a subset of faces.
pub fn build_adjacency_for(
    mesh: &LabeledMesh,
    faces: impl IntoIterator<Item = usize>,
) -> FaceAdjacency {
    let mut edges: BTreeMap<EdgeKey, Vec<u32>> = BTreeMap::new();
    for f in faces {
        let t = mesh.triangles[f];
        for k in 0..3 {
            edges
                .entry(edge_key(t[k], t[(k + 1) % 3]))
                .or_default()
                .push(f as u32);
        }
    }
    for v in edges.values_mut() {
        v.sort_unstable();
    }
    FaceAdjacency { edges }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub degenerate_faces: Vec<usize>,
    pub non_manifold_edges: Vec<EdgeKey>,
    pub unreferenced_vertices: Vec<usize>,
    /// (face, corner) pairs whose UV leaves [0, 1]².
    pub out_of_range_uvs: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.degenerate_faces.is_empty()
            && self.non_manifold_edges.is_empty()
            && self.unreferenced_vertices.is_empty()
            && self.out_of_range_uvs.is_empty()
    }
}

pub fn validate(mesh: &LabeledMesh, min_area: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    for f in 0..mesh.face_count() {
        if mesh.face_area(f) < min_area {
            report.degenerate_faces.push(f);
        }
    }
    report.non_manifold_edges = build_adjacency(mesh).non_manifold_edges();
    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &i in t {
            if let Some(u) = used.get_mut(i as usize) {
                *u = true;
            }
        }
    }
    report.unreferenced_vertices = (0..used.len()).filter(|&i| !used[i]).collect();
    if let Some(uvs) = &mesh.corner_uvs {
        for (f, tri) in uvs.iter().enumerate() {
            for (c, uv) in tri.iter().enumerate() {
                // Missing UVs are not out of range.
                if uv[0].is_nan() && uv[1].is_nan() {
                    continue;
                }
                if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                    report.out_of_range_uvs.push((f, c));
                }
            }
        }
    }
    report
}

/// One instance's faces, with maps back into the source mesh.
#[derive(Clone, Debug)]
pub struct InstancePart {
    pub key: Label,
    pub mesh: LabeledMesh,
    /// Source face index of each submesh face.
    pub face_map: Vec<u32>,
    /// Source vertex index of each submesh vertex.
    pub vertex_map: Vec<u32>,
}

/// Splits by (class, instance), in ascending label order.
pub fn split_by_instance(mesh: &LabeledMesh) -> Vec<InstancePart> {
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (f, l) in mesh.labels.iter().enumerate() {
        groups.entry(*l).or_default().push(f);
    }
    groups
        .into_iter()
        .map(|(key, faces)| {
            let (sub, vertex_map) = mesh.select_faces(&faces).compact();
            InstancePart {
                key,
                mesh: sub,
                face_map: faces.iter().map(|&f| f as u32).collect(),
                vertex_map,
            }
        })
        .collect()
}

/// Inverse of [`split_by_instance`] for meshes without unreferenced vertices.
pub fn reassemble(parts: &[InstancePart]) -> LabeledMesh {
    let nf: usize = parts.iter().map(|p| p.face_map.len()).sum();
    let nv = parts
        .iter()
        .flat_map(|p| p.vertex_map.iter())
        .map(|&v| v as usize + 1)
        .max()
        .unwrap_or(0);
    let mut out = LabeledMesh {
        vertices: vec![Vec3::zeros(); nv],
        triangles: vec![[0; 3]; nf],
        labels: vec![Label::new(0, 0); nf],
        is_new: vec![false; nf],
        corner_uvs: None,
        textures: parts
            .first()
            .map(|p| p.mesh.textures.clone())
            .unwrap_or_default(),
        face_page: vec![0; nf],
    };
    let with_uv = parts.iter().any(|p| p.mesh.corner_uvs.is_some());
    let mut uvs = vec![[NO_UV; 3]; nf];
    for p in parts {
        for (local, &global) in p.vertex_map.iter().enumerate() {
            out.vertices[global as usize] = p.mesh.vertices[local];
        }
        for (local, &global) in p.face_map.iter().enumerate() {
            let g = global as usize;
            let t = p.mesh.triangles[local];
            out.triangles[g] = t.map(|i| p.vertex_map[i as usize]);
            out.labels[g] = p.mesh.labels[local];
            out.is_new[g] = p.mesh.is_new[local];
            out.face_page[g] = p.mesh.face_page[local];
            if let Some(u) = &p.mesh.corner_uvs {
                uvs[g] = u[local];
            }
        }
    }
    if with_uv {
        out.corner_uvs = Some(uvs);
    }
    out
}

/// Loads an OBJ or PLY mesh. A sidecar, when given, overrides any labels
/// embedded in the file; faces without a label get `(class_map.unknown, 0)`.
pub fn load_mesh(
    path: &Path,
    labels_path: Option<&Path>,
    class_map: &ClassMap,
) -> Result<LabeledMesh, MeshError> {
    if !path.exists() {
        return Err(MeshError::NotFound(path.to_path_buf()));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let raw = match ext.as_deref() {
        Some("obj") => obj::read_obj(path)?,
        Some("ply") => ply::read_ply(path)?,
        _ => return Err(MeshError::UnsupportedFormat(path.to_path_buf())),
    };
    let sidecar = match labels_path {
        Some(p) => {
            if !p.exists() {
                return Err(MeshError::NotFound(p.to_path_buf()));
            }
            Some(read_sidecar(p)?)
        }
        None => None,
    };
    raw.into_mesh(sidecar, class_map)
}

/// Writes OBJ (+ MTL + PNG pages + label sidecar) or ASCII PLY (+ sidecar)
/// depending on the extension. The sidecar is `<stem>.labels.json`.
pub fn save_mesh(mesh: &LabeledMesh, path: &Path) -> Result<(), MeshError> {
    mesh.check()?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("obj") => obj::write_obj(mesh, path)?,
        Some("ply") => ply::write_ply(mesh, path)?,
        _ => return Err(MeshError::UnsupportedFormat(path.to_path_buf())),
    }
    write_sidecar(&sidecar_path(path), &mesh.labels, &mesh.is_new)
}

/// `<dir>/<stem>.labels.json` next to a mesh file.
pub fn sidecar_path(mesh_path: &Path) -> PathBuf {
    let stem = mesh_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh");
    mesh_path.with_file_name(format!("{stem}.labels.json"))
}

/// Mesh data as parsed from disk, before labels are resolved.
pub(crate) struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Input polygon each triangle came from.
    pub source_face: Vec<usize>,
    pub input_faces: usize,
    pub corner_uvs: Option<Vec<[[f64; 2]; 3]>>,
    pub textures: Vec<Arc<TextureImage>>,
    pub face_page: Vec<u32>,
    /// Labels embedded in the file (PLY face properties), per input face.
    pub embedded: Option<Vec<Label>>,
    pub embedded_new: Option<Vec<bool>>,
}

impl RawMesh {
    fn into_mesh(
        self,
        sidecar: Option<Sidecar>,
        class_map: &ClassMap,
    ) -> Result<LabeledMesh, MeshError> {
        let default = Label::new(class_map.unknown, 0);
        let mut per_input = self
            .embedded
            .clone()
            .unwrap_or_else(|| vec![default; self.input_faces]);
        let mut new_input = self
            .embedded_new
            .clone()
            .unwrap_or_else(|| vec![false; self.input_faces]);
        if let Some(sc) = sidecar {
            if sc.labels.len() > self.input_faces
                || sc
                    .labels
                    .keys()
                    .next_back()
                    .is_some_and(|&k| k >= self.input_faces)
            {
                return Err(MeshError::LabelCountMismatch {
                    labels: sc.labels.len(),
                    faces: self.input_faces,
                });
            }
            for (k, l) in sc.labels {
                per_input[k] = l;
            }
            for (k, n) in sc.new_faces {
                new_input[k] = n;
            }
        }
        for (face, l) in per_input.iter().enumerate() {
            if !class_map.contains(l.class) {
                return Err(MeshError::UnknownClass {
                    face,
                    class: l.class,
                });
            }
        }
        let labels = self.source_face.iter().map(|&s| per_input[s]).collect();
        let is_new = self.source_face.iter().map(|&s| new_input[s]).collect();
        let mesh = LabeledMesh {
            vertices: self.vertices,
            triangles: self.triangles,
            labels,
            is_new,
            corner_uvs: self.corner_uvs,
            textures: self.textures,
            face_page: self.face_page,
        };
        mesh.check()?;
        Ok(mesh)
    }
}

/// Formats an f64 so that parsing it back yields the same value.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
