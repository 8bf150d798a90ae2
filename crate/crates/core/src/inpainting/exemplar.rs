//! Multiscale exemplar inpainting: randomized patch correspondence search
//! with voting, restricted to fully-reference source patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ChartRaster, Coverage, InpaintConfig, InpaintError};
use crate::geometry::derive_seed;

/// `ceil(log2(min side / 32))`, at least 1.
pub fn default_pyramid_levels(width: u32, height: u32) -> u32 {
    let m = width.min(height) as f64;
    let l = (m / 32.0).log2().ceil();
    if l.is_finite() && l >= 1.0 {
        l as u32
    } else {
        1
    }
}

struct Level {
    w: i32,
    h: i32,
    color: Vec<[f32; 3]>,
    cov: Vec<Coverage>,
}

impl Level {
    #[inline]
    fn at(&self, x: i32, y: i32) -> usize {
        (y * self.w + x) as usize
    }

    fn downsample(&self) -> Level {
        let w = (self.w + 1) / 2;
        let h = (self.h + 1) / 2;
        let mut color = vec![[0.0; 3]; (w * h) as usize];
        let mut cov = vec![Coverage::Outside; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let (mut fill, mut n, mut acc) = (false, 0.0f32, [0.0f32; 3]);
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (cx, cy) = (2 * x + dx, 2 * y + dy);
                    if cx >= self.w || cy >= self.h {
                        continue;
                    }
                    let i = self.at(cx, cy);
                    match self.cov[i] {
                        Coverage::Fill => fill = true,
                        Coverage::Reference => {
                            for k in 0..3 {
                                acc[k] += self.color[i][k];
                            }
                            n += 1.0;
                        }
                        Coverage::Outside => {}
                    }
                }
                let o = (y * w + x) as usize;
                if fill {
                    cov[o] = Coverage::Fill;
                } else if n > 0.0 {
                    cov[o] = Coverage::Reference;
                    color[o] = acc.map(|a| a / n);
                }
            }
        }
        Level { w, h, color, cov }
    }

    /// Onion-peel diffusion: each layer of fill texels next to known texels
    /// takes the mean of its known 8-neighbors.
    fn diffuse_fill(&mut self) {
        let mut known: Vec<bool> = self.cov.iter().map(|&c| c == Coverage::Reference).collect();
        let mut frontier: Vec<usize> = (0..self.cov.len())
            .filter(|&i| self.cov[i] == Coverage::Fill)
            .collect();
        loop {
            let mut layer = Vec::new();
            for &i in &frontier {
                let (x, y) = (i as i32 % self.w, i as i32 / self.w);
                let (mut acc, mut n) = ([0.0f32; 3], 0.0f32);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= self.w || ny >= self.h {
                            continue;
                        }
                        let j = self.at(nx, ny);
                        if known[j] {
                            for k in 0..3 {
                                acc[k] += self.color[j][k];
                            }
                            n += 1.0;
                        }
                    }
                }
                if n > 0.0 {
                    layer.push((i, acc.map(|a| a / n)));
                }
            }
            if layer.is_empty() {
                break;
            }
            for &(i, c) in &layer {
                self.color[i] = c;
                known[i] = true;
            }
            frontier.retain(|&i| !known[i]);
        }
        if frontier.is_empty() {
            return;
        }
        // Fill islands with no path to reference texels take the mean.
        let (mut acc, mut n) = ([0.0f64; 3], 0.0f64);
        for (c, k) in self.color.iter().zip(&self.cov) {
            if *k == Coverage::Reference {
                for i in 0..3 {
                    acc[i] += c[i] as f64;
                }
                n += 1.0;
            }
        }
        let mean = acc.map(|a| (a / n.max(1.0)) as f32);
        for i in frontier {
            self.color[i] = mean;
        }
    }
}

struct Matcher<'a> {
    lv: &'a Level,
    r: i32,
    valid: &'a [bool],
}

/// Centers whose whole patch is inside the raster and reference-only.
fn valid_sources(lv: &Level, r: i32) -> (Vec<bool>, Vec<u32>) {
    // Summed-area table of non-reference texels.
    let (w, h) = (lv.w as usize, lv.h as usize);
    let mut sat = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let bad = (lv.cov[y * w + x] != Coverage::Reference) as u32;
            sat[(y + 1) * (w + 1) + x + 1] =
                bad + sat[y * (w + 1) + x + 1] + sat[(y + 1) * (w + 1) + x] - sat[y * (w + 1) + x];
        }
    }
    let mut valid = vec![false; w * h];
    let mut sources = Vec::new();
    for y in r..lv.h - r {
        for x in r..lv.w - r {
            let (x0, y0, x1, y1) = (
                (x - r) as usize,
                (y - r) as usize,
                (x + r + 1) as usize,
                (y + r + 1) as usize,
            );
            let bad = sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
                - sat[y0 * (w + 1) + x1]
                - sat[y1 * (w + 1) + x0];
            if bad == 0 {
                let i = lv.at(x, y);
                valid[i] = true;
                sources.push(i as u32);
            }
        }
    }
    (valid, sources)
}

impl Matcher<'_> {
    /// Squared color distance over the in-bounds, covered part of the target
    /// patch; stops early once above `limit`.
    fn distance(&self, p: usize, s: usize, limit: f32) -> f32 {
        let lv = self.lv;
        let (px, py) = (p as i32 % lv.w, p as i32 / lv.w);
        let (sx, sy) = (s as i32 % lv.w, s as i32 / lv.w);
        let mut d = 0.0f32;
        for dy in -self.r..=self.r {
            let ty = py + dy;
            if ty < 0 || ty >= lv.h {
                continue;
            }
            for dx in -self.r..=self.r {
                let tx = px + dx;
                if tx < 0 || tx >= lv.w {
                    continue;
                }
                let t = lv.at(tx, ty);
                if lv.cov[t] == Coverage::Outside {
                    continue;
                }
                let a = lv.color[t];
                let b = lv.color[lv.at(sx + dx, sy + dy)];
                d += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
            }
            if d > limit {
                return d;
            }
        }
        d
    }
}

/// Fills the Fill texels of `raster` from its own Reference texels.
/// Reference and Outside texels are returned unchanged.
pub fn inpaint_exemplar(
    raster: &ChartRaster,
    config: &InpaintConfig,
) -> Result<ChartRaster, InpaintError> {
    config.validate()?;
    if raster.count(Coverage::Reference) == 0 {
        return Err(InpaintError::InsufficientReference);
    }
    let mut out = raster.clone();
    if raster.count(Coverage::Fill) == 0 {
        return Ok(out);
    }
    let levels = config
        .pyramid_levels
        .unwrap_or_else(|| default_pyramid_levels(raster.width, raster.height));
    let r = (config.patch_size / 2) as i32;

    let base = Level {
        w: raster.width as i32,
        h: raster.height as i32,
        color: raster
            .color
            .iter()
            .zip(&raster.coverage)
            .map(|(c, k)| {
                if *k == Coverage::Fill {
                    [0.0; 3]
                } else {
                    c.map(|v| v as f32)
                }
            })
            .collect(),
        cov: raster.coverage.clone(),
    };
    let mut pyramid = vec![base];
    for _ in 1..levels {
        let last = pyramid.last().expect("non-empty");
        if last.w <= 1 && last.h <= 1 {
            break;
        }
        let next = last.downsample();
        pyramid.push(next);
    }

    let mut prev_nnf: Option<(Vec<u32>, i32)> = None;
    for li in (0..pyramid.len()).rev() {
        if li + 1 == pyramid.len() {
            pyramid[li].diffuse_fill();
        } else {
            // Upsample colors of fill texels from the coarser level; fill
            // texels without a fill parent get diffused values.
            let (lo, hi) = pyramid.split_at_mut(li + 1);
            let (fine, coarse) = (&mut lo[li], &hi[0]);
            let mut orphan = false;
            for y in 0..fine.h {
                for x in 0..fine.w {
                    let i = fine.at(x, y);
                    if fine.cov[i] == Coverage::Fill {
                        let j = coarse.at(x / 2, y / 2);
                        fine.color[i] = coarse.color[j];
                        orphan |= coarse.cov[j] != Coverage::Fill;
                    }
                }
            }
            if orphan {
                fine.diffuse_fill();
            }
        }
        let lv = &pyramid[li];
        let (valid, sources) = valid_sources(lv, r);
        if sources.is_empty() {
            prev_nnf = None;
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(raster.seed, &[li as i64]));
        let targets: Vec<usize> = (0..lv.cov.len())
            .filter(|&i| lv.cov[i] == Coverage::Fill)
            .collect();
        let mut nnf = vec![u32::MAX; lv.cov.len()];
        for &p in &targets {
            let (x, y) = (p as i32 % lv.w, p as i32 / lv.w);
            let mut s = None;
            if let Some((pn, pw)) = &prev_nnf {
                let parent = ((y / 2) * pw + x / 2) as usize;
                let ps = pn[parent];
                if ps != u32::MAX {
                    let (psx, psy) = (ps as i32 % pw, ps as i32 / pw);
                    let (cx, cy) = (x + 2 * (psx - x / 2), y + 2 * (psy - y / 2));
                    if cx >= 0 && cy >= 0 && cx < lv.w && cy < lv.h && valid[lv.at(cx, cy)] {
                        s = Some(lv.at(cx, cy) as u32);
                    }
                }
            }
            nnf[p] = s.unwrap_or_else(|| sources[rng.random_range(0..sources.len())]);
        }
        for it in 0..config.iterations_per_level {
            let lv = &pyramid[li];
            let m = Matcher {
                lv,
                r,
                valid: &valid,
            };
            search(&m, &targets, &mut nnf, it % 2 == 1, &mut rng);
            let colors = vote(lv, r, &targets, &nnf);
            pyramid[li].color = colors;
        }
        prev_nnf = Some((nnf, pyramid[li].w));
    }

    let fine = &pyramid[0];
    for i in 0..out.color.len() {
        if out.coverage[i] == Coverage::Fill {
            out.color[i] = fine.color[i].map(|v| v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

fn search(m: &Matcher, targets: &[usize], nnf: &mut [u32], reverse: bool, rng: &mut ChaCha8Rng) {
    let lv = m.lv;
    let mut dist: Vec<f32> = vec![0.0; lv.cov.len()];
    for &p in targets {
        dist[p] = m.distance(p, nnf[p] as usize, f32::INFINITY);
    }
    let step: i32 = if reverse { -1 } else { 1 };
    let order: Box<dyn Iterator<Item = &usize>> = if reverse {
        Box::new(targets.iter().rev())
    } else {
        Box::new(targets.iter())
    };
    let max_radius = lv.w.max(lv.h);
    for &p in order {
        let (x, y) = (p as i32 % lv.w, p as i32 / lv.w);
        let mut best = nnf[p] as usize;
        let mut best_d = dist[p];
        let try_candidate = |s: usize, best: &mut usize, best_d: &mut f32| {
            if s != *best && m.valid[s] {
                let d = m.distance(p, s, *best_d);
                if d < *best_d {
                    *best = s;
                    *best_d = d;
                }
            }
        };
        for (dx, dy) in [(step, 0), (0, step)] {
            let (qx, qy) = (x - dx, y - dy);
            if qx < 0 || qy < 0 || qx >= lv.w || qy >= lv.h {
                continue;
            }
            let q = lv.at(qx, qy);
            if nnf[q] == u32::MAX {
                continue;
            }
            let (sx, sy) = (nnf[q] as i32 % lv.w + dx, nnf[q] as i32 / lv.w + dy);
            if sx >= 0 && sy >= 0 && sx < lv.w && sy < lv.h {
                try_candidate(lv.at(sx, sy), &mut best, &mut best_d);
            }
        }
        let mut radius = max_radius;
        while radius >= 1 {
            let (bx, by) = (best as i32 % lv.w, best as i32 / lv.w);
            let sx = (bx + rng.random_range(-radius..=radius)).clamp(0, lv.w - 1);
            let sy = (by + rng.random_range(-radius..=radius)).clamp(0, lv.h - 1);
            try_candidate(lv.at(sx, sy), &mut best, &mut best_d);
            radius /= 2;
        }
        nnf[p] = best as u32;
        dist[p] = best_d;
    }
}

fn vote(lv: &Level, r: i32, targets: &[usize], nnf: &[u32]) -> Vec<[f32; 3]> {
    let mut acc = vec![[0.0f32; 3]; lv.cov.len()];
    let mut n = vec![0.0f32; lv.cov.len()];
    for &p in targets {
        let (px, py) = (p as i32 % lv.w, p as i32 / lv.w);
        let s = nnf[p] as i32;
        let (sx, sy) = (s % lv.w, s / lv.w);
        for dy in -r..=r {
            for dx in -r..=r {
                let (tx, ty) = (px + dx, py + dy);
                if tx < 0 || ty < 0 || tx >= lv.w || ty >= lv.h {
                    continue;
                }
                let t = lv.at(tx, ty);
                if lv.cov[t] != Coverage::Fill {
                    continue;
                }
                let c = lv.color[lv.at(sx + dx, sy + dy)];
                for k in 0..3 {
                    acc[t][k] += c[k];
                }
                n[t] += 1.0;
            }
        }
    }
    let mut out = lv.color.clone();
    for &t in targets {
        if n[t] > 0.0 {
            out[t] = acc[t].map(|a| a / n[t]);
        }
    }
    out
}
