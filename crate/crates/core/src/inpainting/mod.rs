//! Chart rasterization, the new-geometry mask, and texel inpainting.

mod exemplar;
mod hook;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{derive_seed, Vec2};
use crate::mesh::{Label, LabeledMesh, TextureImage};
use crate::uv_mapping::UvChart;

pub use exemplar::{default_pyramid_levels, inpaint_exemplar};
pub use hook::{inpaint_external, ExternalHook};

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("chart has no reference texels")]
    InsufficientReference,
    #[error("face {0} has no source texture coordinates and is not new")]
    MissingSourceUv(u32),
    #[error("face {face} samples texture page {page} which does not exist")]
    MissingTexture { face: u32, page: u32 },
    #[error("invalid inpainting parameters: {0}")]
    InvalidParams(String),
    #[error("hook command failed ({status}): {stderr}")]
    HookFailed { status: String, stderr: String },
    #[error("hook command timed out after {0} s")]
    HookTimeout(f64),
    #[error("hook output is {got:?}, expected {expected:?}")]
    OutputSizeMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("hook io: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coverage {
    Outside,
    Reference,
    Fill,
}

/// Per-chart raster. Row 0 is the top (largest chart v).
#[derive(Clone, Debug, PartialEq)]
pub struct ChartRaster {
    pub class: i64,
    pub instance: i64,
    pub component: usize,
    pub width: u32,
    pub height: u32,
    pub color: Vec<[u8; 3]>,
    pub coverage: Vec<Coverage>,
    pub seed: u64,
}

impl ChartRaster {
    pub fn new(label: Label, component: usize, width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        ChartRaster {
            class: label.class,
            instance: label.instance,
            component,
            width,
            height,
            color: vec![[0; 3]; n],
            coverage: vec![Coverage::Outside; n],
            seed: 0,
        }
    }

    pub fn label(&self) -> Label {
        Label::new(self.class, self.instance)
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn count(&self, c: Coverage) -> usize {
        self.coverage.iter().filter(|&&k| k == c).count()
    }

    pub fn to_image(&self) -> TextureImage {
        let pixels = self.color.iter().flatten().copied().collect();
        TextureImage::new(self.width, self.height, 3, pixels).expect("raster dimensions")
    }

    /// Single-channel mask: 255 on Fill texels, 0 elsewhere.
    pub fn mask_bytes(&self) -> Vec<u8> {
        self.coverage
            .iter()
            .map(|&c| if c == Coverage::Fill { 255 } else { 0 })
            .collect()
    }

    /// Coverage as an RGB debug image: reference gray, fill red, outside black.
    pub fn coverage_image(&self) -> TextureImage {
        let pixels = self
            .coverage
            .iter()
            .flat_map(|c| match c {
                Coverage::Outside => [0, 0, 0],
                Coverage::Reference => [128, 128, 128],
                Coverage::Fill => [255, 0, 0],
            })
            .collect();
        TextureImage::new(self.width, self.height, 3, pixels).expect("raster dimensions")
    }

    /// Per-channel variance of the reference texels, averaged over channels.
    pub fn reference_variance(&self) -> f64 {
        let (mut s, mut s2, mut n) = ([0.0f64; 3], [0.0f64; 3], 0usize);
        for (c, k) in self.color.iter().zip(&self.coverage) {
            if *k == Coverage::Reference {
                for i in 0..3 {
                    let v = c[i] as f64;
                    s[i] += v;
                    s2[i] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return 0.0;
        }
        (0..3)
            .map(|i| s2[i] / n as f64 - (s[i] / n as f64).powi(2))
            .sum::<f64>()
            / 3.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Bilinear,
    Nearest,
}

/// Center of texel `(x, y)` in chart coordinates.
#[inline]
pub fn texel_center(height: u32, x: u32, y: u32) -> Vec2 {
    Vec2::new(x as f64 + 0.5, height as f64 - y as f64 - 0.5)
}

/// Texels whose centers lie in the closed chart triangle `t`, with their
/// barycentric coordinates.
pub(crate) fn covered_texels(
    t: &[[f64; 2]; 3],
    width: u32,
    height: u32,
    mut visit: impl FnMut(u32, u32, [f64; 3]),
) {
    let p = t.map(|q| Vec2::new(q[0], q[1]));
    let area = crate::geometry::cross2(p[0], p[1], p[2]);
    if area.abs() <= 0.0 {
        return;
    }
    let xmin = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
    let xmax = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
    let ymin = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
    let ymax = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
    // Column x covers centers x + 0.5; row y covers height - y - 0.5.
    let c0 = (xmin - 0.5).ceil().max(0.0) as i64;
    let c1 = ((xmax - 0.5).floor() as i64).min(width as i64 - 1);
    let r0 = (height as f64 - ymax - 0.5).ceil().max(0.0) as i64;
    let r1 = ((height as f64 - ymin - 0.5).floor() as i64).min(height as i64 - 1);
    let eps = 1e-9 * area.abs();
    for y in r0.max(0)..=r1 {
        for x in c0.max(0)..=c1 {
            let c = texel_center(height, x as u32, y as u32);
            let w0 = crate::geometry::cross2(p[1], p[2], c) / area;
            let w1 = crate::geometry::cross2(p[2], p[0], c) / area;
            let w2 = crate::geometry::cross2(p[0], p[1], c) / area;
            let tol = eps / area.abs();
            if w0 >= -tol && w1 >= -tol && w2 >= -tol {
                visit(x as u32, y as u32, [w0, w1, w2]);
            }
        }
    }
}

/// Rasterizes a chart whose coordinates are in texels.
///
/// Texels whose centers fall in an old face sample the mesh's source
/// texture through that face; texels in a new face become Fill (black).
/// New faces take precedence where both cover a texel center.
pub fn rasterize_chart(
    mesh: &LabeledMesh,
    chart: &UvChart,
    sampling: Sampling,
) -> Result<ChartRaster, InpaintError> {
    let (w, h) = chart.raster_size();
    let mut r = ChartRaster::new(chart.label(), chart.component, w, h);
    let uvs = mesh.corner_uvs.as_ref();
    for (&f, t) in chart.face_ids.iter().zip(&chart.uvs) {
        let fi = f as usize;
        if mesh.is_new[fi] {
            continue;
        }
        if !mesh.has_uv(fi) {
            return Err(InpaintError::MissingSourceUv(f));
        }
        let page = mesh.face_page[fi];
        let tex = mesh
            .textures
            .get(page as usize)
            .ok_or(InpaintError::MissingTexture { face: f, page })?;
        let src = uvs.expect("has_uv")[fi];
        covered_texels(t, w, h, |x, y, b| {
            let i = r.index(x, y);
            if r.coverage[i] != Coverage::Outside {
                return;
            }
            let uv = [
                b[0] * src[0][0] + b[1] * src[1][0] + b[2] * src[2][0],
                b[0] * src[0][1] + b[1] * src[1][1] + b[2] * src[2][1],
            ];
            r.color[i] = match sampling {
                Sampling::Nearest => tex.sample_nearest(uv),
                Sampling::Bilinear => tex
                    .sample_bilinear(uv)
                    .map(|v| v.round().clamp(0.0, 255.0) as u8),
            };
            r.coverage[i] = Coverage::Reference;
        });
    }
    for (&f, t) in chart.face_ids.iter().zip(&chart.uvs) {
        if mesh.is_new[f as usize] {
            covered_texels(t, w, h, |x, y, _| {
                let i = r.index(x, y);
                r.coverage[i] = Coverage::Fill;
                r.color[i] = [0; 3];
            });
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InpaintConfig {
    /// Odd patch side in texels.
    pub patch_size: u32,
    /// Pyramid depth; `None` derives it from the raster size.
    pub pyramid_levels: Option<u32>,
    pub iterations_per_level: u32,
    /// Reference variance (8-bit units squared) above which a chart is flagged.
    pub variance_warning: f64,
    /// Concurrent hook subprocesses.
    pub max_concurrent_hooks: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            patch_size: 7,
            pyramid_levels: None,
            iterations_per_level: 5,
            variance_warning: 3000.0,
            max_concurrent_hooks: 1,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<(), InpaintError> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(InpaintError::InvalidParams(format!(
                "patch_size {} must be odd and >= 3",
                self.patch_size
            )));
        }
        if self.pyramid_levels == Some(0) {
            return Err(InpaintError::InvalidParams(
                "pyramid_levels must be >= 1".into(),
            ));
        }
        if self.max_concurrent_hooks == 0 {
            return Err(InpaintError::InvalidParams(
                "max_concurrent_hooks must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartIssue {
    pub class: i64,
    pub instance: i64,
    pub component: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct InpaintOutcome {
    pub rasters: Vec<ChartRaster>,
    /// Charts that kept their placeholder fill.
    pub failures: Vec<ChartIssue>,
    pub warnings: Vec<ChartIssue>,
}

/// Seed for one chart, independent of processing order.
pub fn chart_seed(global: u64, r: &ChartRaster) -> u64 {
    derive_seed(global, &[r.class, r.instance, r.component as i64])
}

/// Inpaints every raster independently, with the hook when given and the
/// exemplar filler otherwise. Output order matches input order.
pub fn inpaint_all(
    rasters: &[ChartRaster],
    config: &InpaintConfig,
    hook: Option<&ExternalHook>,
    global_seed: u64,
) -> Result<InpaintOutcome, InpaintError> {
    config.validate()?;
    if let Some(h) = hook {
        h.validate()?;
    }
    let one = |r: &ChartRaster| -> (ChartRaster, Option<String>) {
        let mut r = r.clone();
        r.seed = chart_seed(global_seed, &r);
        if r.count(Coverage::Fill) == 0 {
            return (r, None);
        }
        let res = match hook {
            Some(h) => inpaint_external(&r, h),
            None => inpaint_exemplar(&r, config),
        };
        match res {
            Ok(out) => (out, None),
            Err(e) => (r, Some(e.to_string())),
        }
    };
    let results: Vec<(ChartRaster, Option<String>)> = if hook.is_some() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_concurrent_hooks)
            .build()
            .map_err(|e| InpaintError::Io(e.to_string()))?;
        pool.install(|| rasters.par_iter().map(one).collect())
    } else {
        rasters.par_iter().map(one).collect()
    };
    let mut out = InpaintOutcome::default();
    for (r, err) in results {
        let issue = |message: String| ChartIssue {
            class: r.class,
            instance: r.instance,
            component: r.component,
            message,
        };
        if let Some(e) = err {
            out.failures.push(issue(e));
        }
        let var = r.reference_variance();
        if var > config.variance_warning {
            out.warnings.push(issue(format!(
                "reference variance {var:.0} exceeds {:.0}",
                config.variance_warning
            )));
        }
        out.rasters.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
