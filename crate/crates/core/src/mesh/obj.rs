use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{fmt_f64, LabeledMesh, MeshError, RawMesh, TextureImage, NO_UV};
use crate::geometry::Vec3;

struct Material {
    texture: Option<Arc<TextureImage>>,
}

pub(crate) fn read_obj(path: &Path) -> Result<RawMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::from_io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let perr = |line: usize, message: String| MeshError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut triangles = Vec::new();
    let mut source_face = Vec::new();
    let mut uvs: Vec<[[f64; 2]; 3]> = Vec::new();
    let mut face_material: Vec<Option<String>> = Vec::new();
    let mut any_uv = false;
    let mut input_faces = 0usize;
    let mut materials: Vec<(String, Material)> = Vec::new();
    let mut current: Option<String> = None;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let tag = it.next().unwrap_or("");
        match tag {
            "v" => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| perr(lineno, format!("bad vertex: {e}")))?;
                if c.len() < 3 {
                    return Err(perr(lineno, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c: Vec<f64> = it
                    .take(2)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| perr(lineno, format!("bad texcoord: {e}")))?;
                if c.len() < 2 {
                    return Err(perr(lineno, "texcoord needs 2 components".into()));
                }
                texcoords.push([c[0], c[1]]);
            }
            "f" => {
                let mut corners: Vec<(u32, Option<usize>)> = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = parts.next().unwrap_or("");
                    let ti = parts.next().unwrap_or("");
                    let v = resolve_index(vi, vertices.len())
                        .ok_or_else(|| perr(lineno, format!("bad vertex index {vi:?}")))?;
                    let t =
                        if ti.is_empty() {
                            None
                        } else {
                            Some(resolve_index(ti, texcoords.len()).ok_or_else(|| {
                                perr(lineno, format!("bad texcoord index {ti:?}"))
                            })?)
                        };
                    corners.push((v as u32, t));
                }
                if corners.len() < 3 {
                    return Err(perr(lineno, "face needs at least 3 vertices".into()));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    triangles.push(tri.map(|c| c.0));
                    source_face.push(input_faces);
                    let uv = if tri.iter().all(|c| c.1.is_some()) {
                        any_uv = true;
                        tri.map(|c| texcoords[c.1.unwrap()])
                    } else {
                        [NO_UV; 3]
                    };
                    uvs.push(uv);
                    face_material.push(current.clone());
                }
                input_faces += 1;
            }
            "mtllib" => {
                let name = line["mtllib".len()..].trim();
                let mtl_path = dir.join(name);
                if mtl_path.exists() {
                    materials.extend(read_mtl(&mtl_path)?);
                } else {
                    log::warn!("{}: material library {name} not found", path.display());
                }
            }
            "usemtl" => {
                current = Some(line["usemtl".len()..].trim().to_string());
            }
            _ => {}
        }
    }

    // Pages are the textured materials in library order.
    let mut page_of: HashMap<&str, u32> = HashMap::new();
    let mut textures = Vec::new();
    for (name, m) in &materials {
        if let Some(t) = &m.texture {
            page_of.insert(name.as_str(), textures.len() as u32);
            textures.push(t.clone());
        }
    }
    let face_page = face_material
        .iter()
        .map(|m| {
            m.as_deref()
                .and_then(|n| page_of.get(n).copied())
                .unwrap_or(0)
        })
        .collect();

    Ok(RawMesh {
        vertices,
        triangles,
        source_face,
        input_faces,
        corner_uvs: any_uv.then_some(uvs),
        textures,
        face_page,
        embedded: None,
        embedded_new: None,
    })
}

fn resolve_index(tok: &str, count: usize) -> Option<usize> {
    let i: i64 = tok.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return None;
    };
    (idx >= 0 && (idx as usize) < count).then_some(idx as usize)
}

fn read_mtl(path: &Path) -> Result<Vec<(String, Material)>, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::from_io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<(String, Material)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(name) = line.strip_prefix("newmtl") {
            out.push((name.trim().to_string(), Material { texture: None }));
        } else if let Some(file) = line.strip_prefix("map_Kd") {
            // Options such as -s/-o are not supported; take the last token.
            let file = file.split_whitespace().last().unwrap_or("");
            let img = TextureImage::load(&dir.join(file))?;
            if let Some((_, m)) = out.last_mut() {
                m.texture = Some(Arc::new(img));
            }
        }
    }
    Ok(out)
}

pub(crate) fn write_obj(mesh: &LabeledMesh, path: &Path) -> Result<(), MeshError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.face_count() * 90);
    let textured = mesh.corner_uvs.is_some();
    if textured {
        let mtl_name = format!("{stem}.mtl");
        let _ = writeln!(s, "mtllib {mtl_name}");
        let mut mtl = String::new();
        let pages = mesh.textures.len().max(1);
        for p in 0..pages {
            let _ = writeln!(mtl, "newmtl page{p}");
            let _ = writeln!(mtl, "Kd 1.0 1.0 1.0");
            if let Some(tex) = mesh.textures.get(p) {
                let img = format!("{stem}_page{p}.png");
                tex.save_png(&path.with_file_name(&img))?;
                let _ = writeln!(mtl, "map_Kd {img}");
            }
        }
        let mtl_path = path.with_file_name(mtl_name);
        std::fs::write(&mtl_path, mtl).map_err(|e| MeshError::from_io(&mtl_path, e))?;
    }
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
    }
    let mut vt_count = 0usize;
    let mut page: Option<u32> = None;
    for (f, t) in mesh.triangles.iter().enumerate() {
        if textured && page != Some(mesh.face_page[f]) {
            page = Some(mesh.face_page[f]);
            let _ = writeln!(s, "usemtl page{}", mesh.face_page[f]);
        }
        if mesh.has_uv(f) {
            let uv = mesh.corner_uvs.as_ref().unwrap()[f];
            for c in uv {
                let _ = writeln!(s, "vt {} {}", fmt_f64(c[0]), fmt_f64(c[1]));
            }
            let _ = writeln!(
                s,
                "f {}/{} {}/{} {}/{}",
                t[0] + 1,
                vt_count + 1,
                t[1] + 1,
                vt_count + 2,
                t[2] + 1,
                vt_count + 3
            );
            vt_count += 3;
        } else {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    std::fs::write(path, s).map_err(|e| MeshError::from_io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn single_triangle_with_sidecar() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(d.path(), "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let lab = write(d.path(), "t.json", r#"{"0":{"class":2,"instance":0}}"#);
        let m = load_mesh(&obj, Some(&lab), &ClassMap::default()).unwrap();
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.labels[0], Label::new(2, 0));
        assert!(!m.is_new[0]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(
            d.path(),
            "q.obj",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        );
        let lab = write(d.path(), "q.json", r#"{"0":{"class":1,"instance":5}}"#);
        let m = load_mesh(&obj, Some(&lab), &ClassMap::default()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.labels, vec![Label::new(1, 5); 2]);
    }

    #[test]
    fn too_many_labels() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(
            d.path(),
            "q.obj",
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\nf 1 3 4\n",
        );
        let lab = write(
            d.path(),
            "q.json",
            r#"{"0":{"class":1,"instance":0},"1":{"class":1,"instance":0},"2":{"class":1,"instance":0}}"#,
        );
        let err = load_mesh(&obj, Some(&lab), &ClassMap::default()).unwrap_err();
        assert!(matches!(
            err,
            MeshError::LabelCountMismatch {
                labels: 3,
                faces: 2
            }
        ));
    }

    #[test]
    fn unknown_class_and_missing_file() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(d.path(), "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let lab = write(d.path(), "t.json", r#"{"0":{"class":999,"instance":0}}"#);
        let err = load_mesh(&obj, Some(&lab), &ClassMap::default()).unwrap_err();
        assert!(matches!(
            err,
            MeshError::UnknownClass {
                face: 0,
                class: 999
            }
        ));
        let err = load_mesh(&d.path().join("nope.obj"), None, &ClassMap::default()).unwrap_err();
        assert!(matches!(err, MeshError::NotFound(_)));
    }

    #[test]
    fn parse_error_reports_line() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(d.path(), "t.obj", "v 0 0 0\nv 1 0 0\nv 0 x 0\nf 1 2 3\n");
        match load_mesh(&obj, None, &ClassMap::default()).unwrap_err() {
            MeshError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_labels_default_to_unknown() {
        let d = tempfile::tempdir().unwrap();
        let obj = write(d.path(), "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let m = load_mesh(&obj, None, &ClassMap::default()).unwrap();
        assert_eq!(m.labels[0], Label::new(CLASS_UNKNOWN, 0));
    }

    #[test]
    fn textured_save_emits_vt_and_mtl() {
        let d = tempfile::tempdir().unwrap();
        let mut m = LabeledMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            vec![Label::new(2, 0)],
        )
        .unwrap();
        m.corner_uvs = Some(vec![[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]);
        m.textures = vec![Arc::new(TextureImage::filled(4, 4, [9, 9, 9]))];
        let p = d.path().join("out.obj");
        save_mesh(&m, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("vt "));
        let mtl = fs::read_to_string(d.path().join("out.mtl")).unwrap();
        assert!(mtl.contains("map_Kd out_page0.png"));
        let back = load_mesh(&p, Some(&sidecar_path(&p)), &ClassMap::default()).unwrap();
        assert_eq!(back.textures.len(), 1);
        assert_eq!(back.textures[0].rgb(0, 0), [9, 9, 9]);
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let d = tempfile::tempdir().unwrap();
        let m = LabeledMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            vec![Label::new(2, 0)],
        )
        .unwrap();
        let p = d.path().join("missing_dir").join("out.obj");
        assert!(save_mesh(&m, &p).is_err());
    }
}
