//! Chart packing, atlas composition with gutters, and UV reprojection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inpainting::{ChartRaster, Coverage};
use crate::mesh::{Label, LabeledMesh, TextureImage};
use crate::uv_mapping::UvChart;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtlasError {
    #[error("chart ({class}, {instance}) #{component} of {width}x{height} texels does not fit a {max} page with its gutter")]
    ChartTooLarge {
        class: i64,
        instance: i64,
        component: usize,
        width: u32,
        height: u32,
        max: u32,
    },
    #[error("charts do not fit a single {0}x{0} page and multi-page output is disabled")]
    Overflow(u32),
    #[error("invalid packing parameters: {0}")]
    InvalidParams(String),
    #[error("no charts to pack")]
    NoCharts,
    #[error("raster for chart #{index} is {got:?}, placement expects {expected:?}")]
    SizeMismatch {
        index: usize,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("face {0} belongs to no placed chart")]
    UnplacedFace(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackParams {
    pub gutter: u32,
    pub max_atlas_side: u32,
    pub allow_multi_page: bool,
}

impl Default for PackParams {
    fn default() -> Self {
        PackParams {
            gutter: 4,
            max_atlas_side: 8192,
            allow_multi_page: true,
        }
    }
}

impl PackParams {
    pub fn validate(&self) -> Result<(), AtlasError> {
        if self.gutter < 1 {
            return Err(AtlasError::InvalidParams("gutter must be >= 1".into()));
        }
        if !self.max_atlas_side.is_power_of_two() {
            return Err(AtlasError::InvalidParams(format!(
                "max_atlas_side {} is not a power of two",
                self.max_atlas_side
            )));
        }
        Ok(())
    }
}

/// Where one chart sits: `offset` is the top-left texel of its raster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub class: i64,
    pub instance: i64,
    pub component: usize,
    pub page: u32,
    pub offset: [u32; 2],
    pub size: [u32; 2],
}

impl Placement {
    /// Gutter-expanded box `(x0, y0, x1, y1)`, exclusive upper bounds.
    pub fn expanded(&self, gutter: u32) -> (u32, u32, u32, u32) {
        (
            self.offset[0] - gutter,
            self.offset[1] - gutter,
            self.offset[0] + self.size[0] + gutter,
            self.offset[1] + self.size[1] + gutter,
        )
    }
}

/// Placements follow the input chart order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtlasLayout {
    /// `(width, height)` per page.
    pub pages: Vec<(u32, u32)>,
    pub gutter: u32,
    pub placements: Vec<Placement>,
}

struct Skyline {
    width: u32,
    height: u32,
    /// `(x, top)` segment starts; each runs to the next start.
    segs: Vec<(u32, u32)>,
}

impl Skyline {
    fn new(width: u32, height: u32) -> Self {
        Skyline {
            width,
            height,
            segs: vec![(0, 0)],
        }
    }

    /// Lowest-then-leftmost position for a `w × h` box.
    fn find(&self, w: u32, h: u32) -> Option<(u32, u32)> {
        let mut best: Option<(u32, u32)> = None;
        for i in 0..self.segs.len() {
            let x = self.segs[i].0;
            if x + w > self.width {
                break;
            }
            let mut top = 0;
            let mut j = i;
            while j < self.segs.len() && self.segs[j].0 < x + w {
                top = top.max(self.segs[j].1);
                j += 1;
            }
            if top + h > self.height {
                continue;
            }
            if best.is_none_or(|(bx, by)| (top, x) < (by, bx)) {
                best = Some((x, top));
            }
        }
        best
    }

    fn place(&mut self, x: u32, y: u32, w: u32, h: u32) {
        let x1 = x + w;
        // Skyline top at x1 before the update.
        let resume = self
            .segs
            .iter()
            .rev()
            .find(|s| s.0 <= x1)
            .map_or(0, |s| s.1);
        let mut segs: Vec<(u32, u32)> = self.segs.iter().copied().filter(|s| s.0 < x).collect();
        segs.push((x, y + h));
        if x1 < self.width {
            segs.push((x1, resume));
            segs.extend(self.segs.iter().copied().filter(|s| s.0 > x1));
        }
        segs.dedup_by(|b, a| a.1 == b.1);
        self.segs = segs;
    }
}

/// Packs `items` (expanded sizes) in order; returns positions of those that fit.
fn skyline_pack(
    items: &[(usize, u32, u32)],
    width: u32,
    height: u32,
    skip_misfits: bool,
) -> Option<Vec<(usize, u32, u32)>> {
    let mut sky = Skyline::new(width, height);
    let mut out = Vec::with_capacity(items.len());
    for &(i, w, h) in items {
        match sky.find(w, h) {
            Some((x, y)) => {
                sky.place(x, y, w, h);
                out.push((i, x, y));
            }
            None if skip_misfits => {}
            None => return None,
        }
    }
    Some(out)
}

/// Power-of-two page sizes holding the largest item, by area, then by
/// squareness, then wider first.
fn page_sizes(min_w: u32, min_h: u32, max: u32) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    let mut w = min_w.next_power_of_two();
    while w <= max {
        let mut h = min_h.next_power_of_two();
        while h <= max {
            v.push((w, h));
            h *= 2;
        }
        w *= 2;
    }
    v.sort_by_key(|&(w, h)| (w as u64 * h as u64, w.max(h), std::cmp::Reverse(w)));
    v
}

/// Skyline bottom-left packing of chart bounding boxes, translation only.
///
/// Charts are taken by decreasing height, then decreasing width, then label
/// and component. Each page is the smallest power-of-two page that holds its
/// charts; when the remaining charts exceed `max_atlas_side` a full page is
/// filled and another one opened (if allowed).
pub fn pack_charts(charts: &[UvChart], params: &PackParams) -> Result<AtlasLayout, AtlasError> {
    params.validate()?;
    let g = params.gutter;
    let max = params.max_atlas_side;
    let mut items: Vec<(usize, u32, u32)> = Vec::with_capacity(charts.len());
    for (i, c) in charts.iter().enumerate() {
        let (w, h) = c.raster_size();
        if w as u64 + 2 * g as u64 > max as u64 || h as u64 + 2 * g as u64 > max as u64 {
            return Err(AtlasError::ChartTooLarge {
                class: c.class,
                instance: c.instance,
                component: c.component,
                width: w,
                height: h,
                max,
            });
        }
        items.push((i, w + 2 * g, h + 2 * g));
    }
    items.sort_by(|a, b| {
        let (ca, cb) = (&charts[a.0], &charts[b.0]);
        b.2.cmp(&a.2)
            .then(b.1.cmp(&a.1))
            .then((ca.class, ca.instance, ca.component).cmp(&(cb.class, cb.instance, cb.component)))
            .then(a.0.cmp(&b.0))
    });

    let mut layout = AtlasLayout {
        pages: Vec::new(),
        gutter: g,
        placements: vec![
            Placement {
                class: 0,
                instance: 0,
                component: 0,
                page: 0,
                offset: [0, 0],
                size: [0, 0],
            };
            charts.len()
        ],
    };
    let mut remaining = items;
    while !remaining.is_empty() {
        let min_w = remaining.iter().map(|i| i.1).max().expect("non-empty");
        let min_h = remaining.iter().map(|i| i.2).max().expect("non-empty");
        let mut placed = None;
        for (w, h) in page_sizes(min_w, min_h, max) {
            if let Some(p) = skyline_pack(&remaining, w, h, false) {
                placed = Some(((w, h), p));
                break;
            }
        }
        let ((w, h), pos) = match placed {
            Some(p) => p,
            None if params.allow_multi_page => {
                let p = skyline_pack(&remaining, max, max, true).expect("skipping never fails");
                ((max, max), p)
            }
            None => return Err(AtlasError::Overflow(max)),
        };
        let page = layout.pages.len() as u32;
        layout.pages.push((w, h));
        let done: std::collections::BTreeSet<usize> = pos.iter().map(|p| p.0).collect();
        for (i, x, y) in pos {
            let c = &charts[i];
            let (cw, ch) = c.raster_size();
            layout.placements[i] = Placement {
                class: c.class,
                instance: c.instance,
                component: c.component,
                page,
                offset: [x + g, y + g],
                size: [cw, ch],
            };
        }
        remaining.retain(|it| !done.contains(&it.0));
    }
    Ok(layout)
}

/// Sum of chart box areas over the total page area.
pub fn occupancy(layout: &AtlasLayout) -> Result<f64, AtlasError> {
    if layout.placements.is_empty() || layout.pages.is_empty() {
        return Err(AtlasError::NoCharts);
    }
    let used: u64 = layout
        .placements
        .iter()
        .map(|p| p.size[0] as u64 * p.size[1] as u64)
        .sum();
    let total: u64 = layout.pages.iter().map(|&(w, h)| w as u64 * h as u64).sum();
    Ok(used as f64 / total as f64)
}

/// Blits each raster's covered texels at its placement, then grows covered
/// texels into the rest of the chart's gutter-expanded box, one ring per
/// pass for `gutter` passes. Background is black.
pub fn compose_atlas(
    layout: &AtlasLayout,
    rasters: &[ChartRaster],
) -> Result<Vec<TextureImage>, AtlasError> {
    if rasters.len() != layout.placements.len() {
        return Err(AtlasError::InvalidParams(format!(
            "{} rasters for {} placements",
            rasters.len(),
            layout.placements.len()
        )));
    }
    let mut pages: Vec<TextureImage> = layout
        .pages
        .iter()
        .map(|&(w, h)| TextureImage::filled(w, h, [0; 3]))
        .collect();
    let g = layout.gutter;
    for (index, (p, r)) in layout.placements.iter().zip(rasters).enumerate() {
        if (r.width, r.height) != (p.size[0], p.size[1])
            || Label::new(p.class, p.instance) != r.label()
        {
            return Err(AtlasError::SizeMismatch {
                index,
                expected: (p.size[0], p.size[1]),
                got: (r.width, r.height),
            });
        }
        let page = &mut pages[p.page as usize];
        let (x0, y0, x1, y1) = p.expanded(g);
        let (bw, bh) = ((x1 - x0) as usize, (y1 - y0) as usize);
        // Local box state: covered flags and colors.
        let mut filled = vec![false; bw * bh];
        let mut color = vec![[0u8; 3]; bw * bh];
        for y in 0..r.height {
            for x in 0..r.width {
                let i = r.index(x, y);
                if r.coverage[i] != Coverage::Outside {
                    let j = (y + g) as usize * bw + (x + g) as usize;
                    filled[j] = true;
                    color[j] = r.color[i];
                }
            }
        }
        const NB: [(i32, i32); 8] = [
            (-1, 0),
            (1, 0),
            (0, -1),
            (0, 1),
            (-1, -1),
            (1, -1),
            (-1, 1),
            (1, 1),
        ];
        for _ in 0..g {
            let prev = filled.clone();
            for y in 0..bh as i32 {
                for x in 0..bw as i32 {
                    let j = y as usize * bw + x as usize;
                    if prev[j] {
                        continue;
                    }
                    for (dx, dy) in NB {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= bw as i32 || ny >= bh as i32 {
                            continue;
                        }
                        let k = ny as usize * bw + nx as usize;
                        if prev[k] {
                            filled[j] = true;
                            color[j] = color[k];
                            break;
                        }
                    }
                }
            }
        }
        for y in 0..bh {
            for x in 0..bw {
                let j = y * bw + x;
                if filled[j] {
                    page.set_rgb(x0 + x as u32, y0 + y as u32, color[j]);
                }
            }
        }
    }
    Ok(pages)
}

/// Writes atlas UVs for every face from its chart and placement and points
/// the mesh at `pages`.
pub fn reproject(
    mesh: &LabeledMesh,
    charts: &[UvChart],
    layout: &AtlasLayout,
    pages: Vec<Arc<TextureImage>>,
) -> Result<LabeledMesh, AtlasError> {
    if charts.len() != layout.placements.len() {
        return Err(AtlasError::InvalidParams(format!(
            "{} charts for {} placements",
            charts.len(),
            layout.placements.len()
        )));
    }
    let n = mesh.face_count();
    let mut corner = vec![[crate::mesh::NO_UV; 3]; n];
    let mut page_of = vec![u32::MAX; n];
    for (c, p) in charts.iter().zip(&layout.placements) {
        let (pw, ph) = layout.pages[p.page as usize];
        let (pw, ph) = (pw as f64, ph as f64);
        let ch = p.size[1] as f64;
        for (&f, t) in c.face_ids.iter().zip(&c.uvs) {
            corner[f as usize] = t.map(|q| {
                [
                    (p.offset[0] as f64 + q[0]) / pw,
                    1.0 - (p.offset[1] as f64 + ch - q[1]) / ph,
                ]
            });
            page_of[f as usize] = p.page;
        }
    }
    if let Some(f) = page_of.iter().position(|&p| p == u32::MAX) {
        return Err(AtlasError::UnplacedFace(f as u32));
    }
    let mut out = mesh.clone();
    out.corner_uvs = Some(corner);
    out.face_page = page_of;
    out.textures = pages;
    Ok(out)
}

#[cfg(test)]
mod tests;
