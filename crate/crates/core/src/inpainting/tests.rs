use std::sync::Arc;

use super::*;
use crate::geometry::{Frame, Vec3};
use crate::mesh::CLASS_WALL;
use crate::segmentation::Orientation;

fn raster_from(w: u32, h: u32, f: impl Fn(u32, u32) -> ([u8; 3], Coverage)) -> ChartRaster {
    let mut r = ChartRaster::new(Label::new(CLASS_WALL, 1), 0, w, h);
    for y in 0..h {
        for x in 0..w {
            let i = r.index(x, y);
            let (c, k) = f(x, y);
            r.color[i] = if k == Coverage::Fill { [0; 3] } else { c };
            r.coverage[i] = k;
        }
    }
    r
}

fn stripe(x: u32) -> [u8; 3] {
    if (x / 8).is_multiple_of(2) {
        [230, 200, 40]
    } else {
        [20, 40, 160]
    }
}

fn centered_mask(x: u32, y: u32, side: u32, n: u32) -> bool {
    let lo = (side - n) / 2;
    x >= lo && x < lo + n && y >= lo && y < lo + n
}

fn mae_on_fill(r: &ChartRaster, truth: impl Fn(u32, u32) -> [u8; 3]) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for y in 0..r.height {
        for x in 0..r.width {
            let i = r.index(x, y);
            if r.coverage[i] == Coverage::Fill {
                let t = truth(x, y);
                for k in 0..3 {
                    acc += (r.color[i][k] as f64 - t[k] as f64).abs();
                }
                n += 3;
            }
        }
    }
    acc / n as f64 / 255.0
}

fn assert_reference_untouched(before: &ChartRaster, after: &ChartRaster) {
    assert_eq!(before.coverage, after.coverage);
    for i in 0..before.color.len() {
        if before.coverage[i] != Coverage::Fill {
            assert_eq!(before.color[i], after.color[i], "texel {i}");
        }
    }
}

#[test]
fn pyramid_depth_rule() {
    assert_eq!(default_pyramid_levels(256, 256), 3);
    assert_eq!(default_pyramid_levels(16, 400), 1);
    assert_eq!(default_pyramid_levels(33, 33), 1);
    assert_eq!(default_pyramid_levels(65, 1000), 2);
}

#[test]
fn constant_fill_is_exact() {
    let r = raster_from(96, 80, |x, y| {
        let k = if (20..50).contains(&x) && (10..60).contains(&y) {
            Coverage::Fill
        } else if x < 3 && y < 3 {
            Coverage::Outside
        } else {
            Coverage::Reference
        };
        ([97, 97, 97], k)
    });
    let out = inpaint_exemplar(&r, &InpaintConfig::default()).unwrap();
    assert_reference_untouched(&r, &out);
    for (c, k) in out.color.iter().zip(&out.coverage) {
        if *k == Coverage::Fill {
            assert_eq!(*c, [97, 97, 97]);
        }
    }
}

#[test]
fn stripes_continue_through_mask() {
    let r = raster_from(256, 256, |x, y| {
        let k = if centered_mask(x, y, 256, 64) {
            Coverage::Fill
        } else {
            Coverage::Reference
        };
        (stripe(x), k)
    });
    let mut r = r;
    r.seed = 42;
    let out = inpaint_exemplar(&r, &InpaintConfig::default()).unwrap();
    assert_reference_untouched(&r, &out);
    let mae = mae_on_fill(&out, |x, _| stripe(x));
    assert!(mae <= 10.0 / 255.0, "mae {mae}");
    // Deterministic per seed.
    assert_eq!(
        out,
        inpaint_exemplar(&r, &InpaintConfig::default()).unwrap()
    );
}

#[test]
fn all_fill_has_no_reference() {
    let r = raster_from(16, 16, |_, _| ([0; 3], Coverage::Fill));
    assert!(matches!(
        inpaint_exemplar(&r, &InpaintConfig::default()),
        Err(InpaintError::InsufficientReference)
    ));
}

#[test]
fn config_validation() {
    let bad = InpaintConfig {
        patch_size: 4,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let bad = InpaintConfig {
        pyramid_levels: Some(0),
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

fn square_mesh(tex: TextureImage, uv_rot: bool) -> LabeledMesh {
    // 1 m square in the z = 0 plane, UVs covering the whole texture.
    let v = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
    ];
    let t = vec![[0, 1, 2], [0, 2, 3]];
    let mut m = LabeledMesh::new(v, t, vec![Label::new(CLASS_WALL, 1); 2]).unwrap();
    let uv = |p: [f64; 2]| if uv_rot { [p[1], 1.0 - p[0]] } else { p };
    let c = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].map(uv);
    m.corner_uvs = Some(vec![[c[0], c[1], c[2]], [c[0], c[2], c[3]]]);
    m.textures = vec![Arc::new(tex)];
    m
}

fn square_chart(m: &LabeledMesh, density: f64) -> UvChart {
    let uvs = m
        .triangles
        .iter()
        .map(|t| {
            t.map(|i| {
                [
                    m.vertices[i as usize].x * density,
                    m.vertices[i as usize].y * density,
                ]
            })
        })
        .collect();
    UvChart {
        class: CLASS_WALL,
        instance: 1,
        component: 0,
        orientation: Orientation::Vertical,
        frame: Frame {
            origin: Vec3::zeros(),
            u: Vec3::x(),
            v: Vec3::y(),
            normal: Vec3::z(),
        },
        texel_density: density,
        requested_density: None,
        face_ids: vec![0, 1],
        uvs,
        size: [density, density],
    }
}

fn checker(x: u32, y: u32) -> [u8; 3] {
    if (x / 4 + y / 4).is_multiple_of(2) {
        [255, 255, 255]
    } else {
        [0, 0, 0]
    }
}

fn pattern_texture(n: u32) -> TextureImage {
    let mut t = TextureImage::filled(n, n, [0; 3]);
    for y in 0..n {
        for x in 0..n {
            t.set_rgb(
                x,
                y,
                [
                    (x * 7 % 256) as u8,
                    (y * 5 % 256) as u8,
                    ((x * y) % 256) as u8,
                ],
            );
        }
    }
    t
}

#[test]
fn identity_layout_resamples_exactly() {
    let tex = pattern_texture(32);
    let m = square_mesh(tex.clone(), false);
    let r = rasterize_chart(&m, &square_chart(&m, 32.0), Sampling::Nearest).unwrap();
    assert_eq!((r.width, r.height), (32, 32));
    assert_eq!(r.count(Coverage::Reference), 32 * 32);
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(r.color[r.index(x, y)], tex.rgb(x, y));
        }
    }
    // Bilinear sampling at texel centers is also exact.
    let b = rasterize_chart(&m, &square_chart(&m, 32.0), Sampling::Bilinear).unwrap();
    assert_eq!(b.color, r.color);
}

#[test]
fn rotated_checker_is_preserved() {
    let mut tex = TextureImage::filled(32, 32, [0; 3]);
    for y in 0..32 {
        for x in 0..32 {
            tex.set_rgb(x, y, checker(x, y));
        }
    }
    // Source UVs rotated by 90 degrees relative to the chart.
    let m = square_mesh(tex, true);
    let r = rasterize_chart(&m, &square_chart(&m, 32.0), Sampling::Nearest).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            // Chart texel (x, y) samples source texel (31 - y, x).
            let expect = checker(31 - y, x);
            let got = r.color[r.index(x, y)];
            for k in 0..3 {
                assert!((got[k] as i32 - expect[k] as i32).abs() <= 1, "({x},{y})");
            }
        }
    }
}

#[test]
fn new_faces_become_fill() {
    let mut m = square_mesh(pattern_texture(8), false);
    m.is_new = vec![true, true];
    m.corner_uvs = Some(vec![[crate::mesh::NO_UV; 3]; 2]);
    let r = rasterize_chart(&m, &square_chart(&m, 16.0), Sampling::Bilinear).unwrap();
    assert_eq!(r.count(Coverage::Fill), 256);
    assert!(r.color.iter().all(|c| *c == [0; 3]));

    // An old face without UVs is inconsistent.
    m.is_new[1] = false;
    assert!(matches!(
        rasterize_chart(&m, &square_chart(&m, 16.0), Sampling::Bilinear),
        Err(InpaintError::MissingSourceUv(1))
    ));
}

fn hook_raster() -> ChartRaster {
    raster_from(24, 16, |x, y| {
        let k = if (8..16).contains(&x) && (4..12).contains(&y) {
            Coverage::Fill
        } else if y == 0 {
            Coverage::Outside
        } else {
            Coverage::Reference
        };
        ([(x * 10) as u8, (y * 10) as u8, 77], k)
    })
}

#[test]
fn identity_hook_leaves_raster_unchanged() {
    let r = hook_raster();
    let out = inpaint_external(&r, &ExternalHook::new("cp {texture} {output} # {mask}")).unwrap();
    assert_eq!(out, r);
}

#[test]
fn misbehaving_hook_only_changes_fill() {
    let dir = tempfile::tempdir().unwrap();
    let red = dir.path().join("red.png");
    TextureImage::filled(24, 16, [255, 0, 0])
        .save_png(&red)
        .unwrap();
    let r = hook_raster();
    let hook = ExternalHook::new(format!(
        "cp '{}' {{output}} # {{texture}} {{mask}}",
        red.display()
    ));
    let out = inpaint_external(&r, &hook).unwrap();
    assert_reference_untouched(&r, &out);
    for (c, k) in out.color.iter().zip(&out.coverage) {
        if *k == Coverage::Fill {
            assert_eq!(*c, [255, 0, 0]);
        }
    }
}

#[test]
fn hook_errors() {
    let r = hook_raster();
    let fail = ExternalHook::new("echo boom >&2; exit 1 # {texture} {mask} {output}");
    match inpaint_external(&r, &fail) {
        Err(InpaintError::HookFailed { stderr, .. }) => assert_eq!(stderr, "boom"),
        other => panic!("{other:?}"),
    }
    let slow = ExternalHook {
        timeout_secs: 0.2,
        ..ExternalHook::new("sleep 5 # {texture} {mask} {output}")
    };
    assert!(matches!(
        inpaint_external(&r, &slow),
        Err(InpaintError::HookTimeout(_))
    ));

    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.png");
    TextureImage::filled(3, 3, [1, 2, 3])
        .save_png(&small)
        .unwrap();
    let wrong = ExternalHook::new(format!(
        "cp '{}' {{output}} # {{texture}} {{mask}}",
        small.display()
    ));
    assert!(matches!(
        inpaint_external(&r, &wrong),
        Err(InpaintError::OutputSizeMismatch { .. })
    ));
    assert!(ExternalHook::new("cp {texture} out.png")
        .validate()
        .is_err());
}

#[test]
fn hook_sees_white_fill_mask() {
    let dir = tempfile::tempdir().unwrap();
    let keep = dir.path().join("mask-copy.png");
    let r = hook_raster();
    let hook = ExternalHook::new(format!(
        "cp {{mask}} '{}' && cp {{texture}} {{output}}",
        keep.display()
    ));
    inpaint_external(&r, &hook).unwrap();
    let m = image::open(&keep).unwrap().to_luma8();
    for y in 0..16 {
        for x in 0..24 {
            let fill = r.coverage[r.index(x, y)] == Coverage::Fill;
            assert_eq!(m.get_pixel(x, y).0[0], if fill { 255 } else { 0 });
        }
    }
}

#[test]
fn inpaint_all_is_order_and_schedule_independent() {
    let mut a = raster_from(64, 48, |x, y| {
        let k = if (20..30).contains(&x) && (10..30).contains(&y) {
            Coverage::Fill
        } else {
            Coverage::Reference
        };
        (stripe(x + y), k)
    });
    a.instance = 1;
    let mut b = raster_from(40, 40, |x, _| (stripe(x), Coverage::Reference));
    b.instance = 2;
    let mut c = a.clone();
    c.instance = 3;
    let cfg = InpaintConfig::default();
    let ab = inpaint_all(&[a.clone(), b.clone(), c.clone()], &cfg, None, 7).unwrap();
    let ba = inpaint_all(&[c.clone(), b.clone(), a.clone()], &cfg, None, 7).unwrap();
    assert_eq!(ab.rasters[0], ba.rasters[2]);
    assert_eq!(ab.rasters[2], ba.rasters[0]);
    // Zero fill texels: passed through apart from the seed.
    assert_eq!(ab.rasters[1].color, b.color);
    // Isolation: a chart's result does not depend on its neighbors.
    let alone = inpaint_all(std::slice::from_ref(&a), &cfg, None, 7).unwrap();
    assert_eq!(alone.rasters[0], ab.rasters[0]);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let serial =
        one.install(|| inpaint_all(&[a.clone(), b.clone(), c.clone()], &cfg, None, 7).unwrap());
    assert_eq!(serial.rasters, ab.rasters);
    assert!(ab.failures.is_empty());
}

#[test]
fn failed_chart_keeps_placeholder() {
    let r = raster_from(8, 8, |_, _| ([0; 3], Coverage::Fill));
    let out = inpaint_all(std::slice::from_ref(&r), &InpaintConfig::default(), None, 1).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert!(out.rasters[0].color.iter().all(|c| *c == [0; 3]));
}
