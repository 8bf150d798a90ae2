use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{EvalError, GroundTruth};
use crate::geometry::derive_seed;
use crate::mesh::{Label, LabeledMesh};
use crate::reconstruction::{count_open_holes, ReconstructParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementResidual {
    pub class: i64,
    pub instance: i64,
    pub vertices: usize,
    pub rmse: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricError {
    /// Over (vertex, element) pairs of new faces.
    pub rmse: f64,
    pub max_residual: f64,
    pub samples: usize,
    pub per_element: Vec<ElementResidual>,
    pub open_holes: usize,
}

/// Distances of new-face vertices to their element's planted plane, plus
/// open holes left on the planted elements.
pub fn geometric_error(
    result: &LabeledMesh,
    truth: &GroundTruth,
    params: &ReconstructParams,
) -> Result<GeometricError, EvalError> {
    let planes: HashMap<Label, usize> = truth
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.label(), i))
        .collect();
    let mut pairs: BTreeMap<(Label, u32), ()> = BTreeMap::new();
    for f in 0..result.face_count() {
        if !result.is_new[f] {
            continue;
        }
        let l = result.labels[f];
        if !planes.contains_key(&l) {
            return Err(EvalError::UnknownElement {
                class: l.class,
                instance: l.instance,
            });
        }
        for v in result.triangles[f] {
            pairs.insert((l, v), ());
        }
    }
    let mut per: BTreeMap<Label, (usize, f64, f64)> = BTreeMap::new();
    let (mut sum, mut max) = (0.0, 0.0f64);
    for &(l, v) in pairs.keys() {
        let e = &truth.elements[planes[&l]];
        let d = e.plane.signed_distance(&result.vertices[v as usize]).abs();
        let acc = per.entry(l).or_insert((0, 0.0, 0.0));
        acc.0 += 1;
        acc.1 += d * d;
        acc.2 = acc.2.max(d);
        sum += d * d;
        max = max.max(d);
    }
    let n = pairs.len();
    Ok(GeometricError {
        rmse: if n == 0 { 0.0 } else { (sum / n as f64).sqrt() },
        max_residual: max,
        samples: n,
        per_element: per
            .into_iter()
            .map(|(l, (k, s, m))| ElementResidual {
                class: l.class,
                instance: l.instance,
                vertices: k,
                rmse: (s / k as f64).sqrt(),
                max: m,
            })
            .collect(),
        open_holes: count_open_holes(result, &truth.segments(), params),
    })
}

/// Peak signal-to-noise ratio; an exact match has no finite value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    Exact,
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Exact => s.serialize_str("exact"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr::Db(v)),
            Raw::Str(s) if s == "exact" => Ok(Psnr::Exact),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad psnr {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureError {
    pub samples: usize,
    /// Samples on faces without usable texture coordinates; excluded.
    pub uncovered: usize,
    /// Mean absolute channel error in [0, 1].
    pub mae: f64,
    pub psnr: Psnr,
}

/// Compares the result's atlas against the analytic truth at random points
/// on new faces. Each sample's position depends only on (seed, face, index).
pub fn texture_error(
    result: &LabeledMesh,
    truth: &GroundTruth,
    samples_per_face: usize,
    seed: u64,
) -> Result<TextureError, EvalError> {
    let mut samples = 0usize;
    let mut uncovered = 0usize;
    let (mut abs, mut sq) = (0.0, 0.0);
    for f in 0..result.face_count() {
        if !result.is_new[f] {
            continue;
        }
        let l = result.labels[f];
        let e = truth.element(l).ok_or(EvalError::UnknownElement {
            class: l.class,
            instance: l.instance,
        })?;
        let uvs = result.corner_uvs.as_ref().map(|u| u[f]);
        let page = result.textures.get(result.face_page[f] as usize);
        let p = result.corners(f);
        for k in 0..samples_per_face {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[f as i64, k as i64]));
            let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
            if a + b > 1.0 {
                a = 1.0 - a;
                b = 1.0 - b;
            }
            let w = [1.0 - a - b, a, b];
            let (Some(uv), Some(img)) = (uvs, page) else {
                uncovered += 1;
                continue;
            };
            let q = [0, 1].map(|c| w[0] * uv[0][c] + w[1] * uv[1][c] + w[2] * uv[2][c]);
            if !q.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)) {
                uncovered += 1;
                continue;
            }
            let got = img.sample_bilinear(q);
            let want = e.color_at(&(p[0] * w[0] + p[1] * w[1] + p[2] * w[2]));
            for c in 0..3 {
                let d = (got[c] - want[c]) / 255.0;
                abs += d.abs();
                sq += d * d;
            }
            samples += 1;
        }
    }
    if samples == 0 && uncovered > 0 && result.textures.is_empty() {
        return Err(EvalError::Untextured);
    }
    let n = (samples * 3).max(1) as f64;
    let mse = sq / n;
    Ok(TextureError {
        samples,
        uncovered,
        mae: abs / n,
        psnr: if mse == 0.0 {
            Psnr::Exact
        } else {
            Psnr::Db(-10.0 * mse.log10())
        },
    })
}

/// Scores of one pipeline run against its ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub geometric_rmse: f64,
    pub max_plane_residual: f64,
    pub hole_count: usize,
    pub adjacency_ratio: Option<f64>,
    pub max_stretch: Option<f64>,
    pub fill_mae: f64,
    pub fill_psnr: Psnr,
    pub fill_samples: usize,
    pub uncovered_samples: usize,
    pub occupancy: Option<f64>,
    /// Seconds per stage.
    pub runtimes: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn new(geo: &GeometricError, tex: &TextureError) -> Self {
        MetricsReport {
            geometric_rmse: geo.rmse,
            max_plane_residual: geo.max_residual,
            hole_count: geo.open_holes,
            adjacency_ratio: None,
            max_stretch: None,
            fill_mae: tex.mae,
            fill_psnr: tex.psnr,
            fill_samples: tex.samples,
            uncovered_samples: tex.uncovered,
            occupancy: None,
            runtimes: BTreeMap::new(),
        }
    }
}
