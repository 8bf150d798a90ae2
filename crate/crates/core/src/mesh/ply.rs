//! PLY reader (ascii and binary) and ascii writer.
//!
//! Face properties `class`/`instance` carry labels, `texcoord` carries
//! per-corner UVs and `texnumber` the page, following MeshLab's naming.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{fmt_f64, Label, LabeledMesh, MeshError, RawMesh, TextureImage, NO_UV};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
enum PropType {
    Scalar(Scalar),
    List(Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, PropType)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
    BinaryBe,
}

/// Pulls scalar values from either encoding.
trait ValueSource {
    fn read(&mut self, ty: Scalar) -> Result<f64, String>;
}

struct AsciiSource<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl ValueSource for AsciiSource<'_> {
    fn read(&mut self, _ty: Scalar) -> Result<f64, String> {
        let t = self.tokens.next().ok_or("unexpected end of data")?;
        t.parse::<f64>()
            .map_err(|e| format!("bad number {t:?}: {e}"))
    }
}

struct BinarySource<'a> {
    data: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl ValueSource for BinarySource<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64, String> {
        let n = ty.size();
        if self.pos + n > self.data.len() {
            return Err("unexpected end of data".into());
        }
        let mut b = [0u8; 8];
        b[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
        if self.big_endian {
            b[..n].reverse();
        }
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }
}

pub(crate) fn read_ply(path: &Path) -> Result<RawMesh, MeshError> {
    let data = std::fs::read(path).map_err(|e| MeshError::from_io(path, e))?;
    let perr = |line: usize, message: String| MeshError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    // Header
    let mut pos = 0usize;
    let mut lineno = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut texture_files: Vec<String> = Vec::new();
    loop {
        let end = data[pos..]
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| perr(lineno + 1, "unterminated header".into()))?;
        let line = String::from_utf8_lossy(&data[pos..pos + end])
            .trim()
            .to_string();
        pos += end + 1;
        lineno += 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("ply") if lineno == 1 => {}
            _ if lineno == 1 => return Err(perr(1, "missing 'ply' magic".into())),
            Some("format") => {
                format = Some(match it.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some("binary_big_endian") => Format::BinaryBe,
                    other => return Err(perr(lineno, format!("unknown format {other:?}"))),
                });
            }
            Some("comment") => {
                let rest: Vec<&str> = it.collect();
                if rest.first() == Some(&"TextureFile") && rest.len() > 1 {
                    texture_files.push(rest[1..].join(" "));
                }
            }
            Some("element") => {
                let name = it.next().unwrap_or("").to_string();
                let count = it
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| perr(lineno, "bad element count".into()))?;
                elements.push(Element {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(lineno, "property before element".into()))?;
                let toks: Vec<&str> = it.collect();
                let bad = || perr(lineno, format!("bad property line {line:?}"));
                let (ty, name) = if toks.first() == Some(&"list") {
                    if toks.len() != 4 {
                        return Err(bad());
                    }
                    let c = Scalar::parse(toks[1]).ok_or_else(bad)?;
                    let v = Scalar::parse(toks[2]).ok_or_else(bad)?;
                    (PropType::List(c, v), toks[3])
                } else {
                    if toks.len() != 2 {
                        return Err(bad());
                    }
                    (
                        PropType::Scalar(Scalar::parse(toks[0]).ok_or_else(bad)?),
                        toks[1],
                    )
                };
                el.props.push((name.to_string(), ty));
            }
            Some("end_header") => break,
            Some("obj_info") | None => {}
            Some(other) => return Err(perr(lineno, format!("unknown header keyword {other:?}"))),
        }
    }
    let format = format.ok_or_else(|| perr(lineno, "missing format line".into()))?;

    let body = &data[pos..];
    let ascii_text;
    let mut src: Box<dyn ValueSource> = match format {
        Format::Ascii => {
            ascii_text = String::from_utf8_lossy(body).into_owned();
            Box::new(AsciiSource {
                tokens: ascii_text.split_ascii_whitespace(),
            })
        }
        Format::BinaryLe | Format::BinaryBe => Box::new(BinarySource {
            data: body,
            pos: 0,
            big_endian: format == Format::BinaryBe,
        }),
    };

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut source_face = Vec::new();
    let mut uvs: Vec<[[f64; 2]; 3]> = Vec::new();
    let mut face_page = Vec::new();
    let mut any_uv = false;
    let mut classes: Option<Vec<i64>> = None;
    let mut instances: Option<Vec<i64>> = None;
    let mut news: Option<Vec<bool>> = None;
    let mut input_faces = 0usize;

    for el in &elements {
        let has = |n: &str| el.props.iter().any(|(p, _)| p == n);
        if el.name == "face" {
            if has("class") {
                classes = Some(Vec::with_capacity(el.count));
            }
            if has("instance") {
                instances = Some(Vec::with_capacity(el.count));
            }
            if has("new") {
                news = Some(Vec::with_capacity(el.count));
            }
        }
        for row in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut indices: Vec<u32> = Vec::new();
            let mut tc: Vec<f64> = Vec::new();
            let mut page = 0u32;
            for (name, ty) in &el.props {
                let ctx = |m: String| perr(lineno + 1, format!("{} {row}: {m}", el.name));
                match ty {
                    PropType::Scalar(s) => {
                        let v = src.read(*s).map_err(ctx)?;
                        match (el.name.as_str(), name.as_str()) {
                            ("vertex", "x") => xyz[0] = v,
                            ("vertex", "y") => xyz[1] = v,
                            ("vertex", "z") => xyz[2] = v,
                            ("face", "class") => classes.as_mut().unwrap().push(v as i64),
                            ("face", "instance") => instances.as_mut().unwrap().push(v as i64),
                            ("face", "new") => news.as_mut().unwrap().push(v != 0.0),
                            ("face", "texnumber") => page = v as u32,
                            _ => {}
                        }
                    }
                    PropType::List(cty, vty) => {
                        let n = src.read(*cty).map_err(ctx)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(src.read(*vty).map_err(ctx)?);
                        }
                        match (el.name.as_str(), name.as_str()) {
                            ("face", "vertex_indices") | ("face", "vertex_index") => {
                                indices = vals.iter().map(|&v| v as u32).collect()
                            }
                            ("face", "texcoord") => tc = vals,
                            _ => {}
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2])),
                "face" => {
                    if indices.len() < 3 {
                        return Err(perr(lineno + 1, format!("face {row} has < 3 vertices")));
                    }
                    let has_tc = tc.len() == 2 * indices.len();
                    for k in 1..indices.len() - 1 {
                        triangles.push([indices[0], indices[k], indices[k + 1]]);
                        source_face.push(input_faces);
                        face_page.push(page);
                        if has_tc {
                            any_uv = true;
                            let c = |i: usize| [tc[2 * i], tc[2 * i + 1]];
                            uvs.push([c(0), c(k), c(k + 1)]);
                        } else {
                            uvs.push([NO_UV; 3]);
                        }
                    }
                    input_faces += 1;
                }
                _ => {}
            }
        }
    }

    let nv = vertices.len();
    if let Some(t) = triangles
        .iter()
        .find(|t| t.iter().any(|&i| i as usize >= nv))
    {
        return Err(perr(lineno, format!("face index out of range: {t:?}")));
    }

    let embedded = match (classes, instances) {
        (None, None) => None,
        (c, i) => {
            let c = c.unwrap_or_else(|| vec![0; input_faces]);
            let i = i.unwrap_or_else(|| vec![0; input_faces]);
            Some(
                c.into_iter()
                    .zip(i)
                    .map(|(c, i)| Label::new(c, i))
                    .collect(),
            )
        }
    };

    let dir = path.parent().unwrap_or(Path::new("."));
    let mut textures = Vec::new();
    for f in &texture_files {
        textures.push(Arc::new(TextureImage::load(&dir.join(f))?));
    }
    if textures.is_empty() {
        face_page.iter_mut().for_each(|p| *p = 0);
    }

    Ok(RawMesh {
        vertices,
        triangles,
        source_face,
        input_faces,
        corner_uvs: any_uv.then_some(uvs),
        textures,
        face_page,
        embedded,
        embedded_new: news,
    })
}

pub(crate) fn write_ply(mesh: &LabeledMesh, path: &Path) -> Result<(), MeshError> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let textured = mesh.corner_uvs.is_some();
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    if textured {
        for (p, tex) in mesh.textures.iter().enumerate() {
            let img = format!("{stem}_page{p}.png");
            tex.save_png(&path.with_file_name(&img))?;
            let _ = writeln!(s, "comment TextureFile {img}");
        }
    }
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(s, "element face {}", mesh.face_count());
    s.push_str("property list uchar int vertex_indices\n");
    s.push_str("property int class\nproperty int instance\nproperty uchar new\n");
    if textured {
        s.push_str("property list uchar double texcoord\nproperty int texnumber\n");
    }
    s.push_str("end_header\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
    }
    for f in 0..mesh.face_count() {
        let t = mesh.triangles[f];
        let l = mesh.labels[f];
        let _ = write!(
            s,
            "3 {} {} {} {} {} {}",
            t[0], t[1], t[2], l.class, l.instance, mesh.is_new[f] as u8
        );
        if textured {
            if mesh.has_uv(f) {
                s.push_str(" 6");
                for c in mesh.corner_uvs.as_ref().unwrap()[f] {
                    let _ = write!(s, " {} {}", fmt_f64(c[0]), fmt_f64(c[1]));
                }
            } else {
                s.push_str(" 0");
            }
            let _ = write!(s, " {}", mesh.face_page[f]);
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| MeshError::from_io(path, e))
}
