use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{Frame, Vec3};
use crate::mesh::CLASS_WALL;
use crate::segmentation::Orientation;

pub(crate) fn rect_chart(instance: i64, w: f64, h: f64) -> UvChart {
    UvChart {
        class: CLASS_WALL,
        instance,
        component: 0,
        orientation: Orientation::Vertical,
        frame: Frame {
            origin: Vec3::zeros(),
            u: Vec3::x(),
            v: Vec3::z(),
            normal: -Vec3::y(),
        },
        texel_density: 1.0,
        requested_density: None,
        face_ids: vec![2 * instance as u32, 2 * instance as u32 + 1],
        uvs: vec![
            [[0.0, 0.0], [w, 0.0], [w, h]],
            [[0.0, 0.0], [w, h], [0.0, h]],
        ],
        size: [w, h],
    }
}

/// Every texel claimed by at most one gutter-expanded box, all inside the page.
fn audit(layout: &AtlasLayout) {
    let mut grids: Vec<Vec<u32>> = layout
        .pages
        .iter()
        .map(|&(w, h)| vec![u32::MAX; (w * h) as usize])
        .collect();
    for (i, p) in layout.placements.iter().enumerate() {
        let (pw, ph) = layout.pages[p.page as usize];
        let (x0, y0, x1, y1) = p.expanded(layout.gutter);
        assert!(x1 <= pw && y1 <= ph, "placement {i} leaves the page");
        for y in y0..y1 {
            for x in x0..x1 {
                let cell = &mut grids[p.page as usize][(y * pw + x) as usize];
                assert_eq!(*cell, u32::MAX, "texel ({x},{y}) claimed twice");
                *cell = i as u32;
            }
        }
    }
}

#[test]
fn single_chart_example() {
    let l = pack_charts(&[rect_chart(1, 100.0, 50.0)], &PackParams::default()).unwrap();
    assert_eq!(l.pages, vec![(128, 64)]);
    assert_eq!(l.placements[0].offset, [4, 4]);
    audit(&l);
}

#[test]
fn two_small_charts_in_a_small_page() {
    let p = PackParams {
        gutter: 1,
        max_atlas_side: 32,
        allow_multi_page: false,
    };
    let l = pack_charts(&[rect_chart(1, 10.0, 10.0), rect_chart(2, 10.0, 10.0)], &p).unwrap();
    assert_eq!(l.pages.len(), 1);
    audit(&l);
}

#[test]
fn oversized_chart_is_rejected() {
    let p = PackParams {
        max_atlas_side: 4096,
        ..Default::default()
    };
    assert!(matches!(
        pack_charts(&[rect_chart(1, 5000.0, 5000.0)], &p),
        Err(AtlasError::ChartTooLarge { .. })
    ));
    assert!(PackParams {
        max_atlas_side: 1000,
        ..Default::default()
    }
    .validate()
    .is_err());
}

#[test]
fn overflow_opens_pages_or_fails() {
    let charts: Vec<UvChart> = (0..5).map(|i| rect_chart(i, 50.0, 50.0)).collect();
    let p = PackParams {
        gutter: 2,
        max_atlas_side: 128,
        allow_multi_page: true,
    };
    let l = pack_charts(&charts, &p).unwrap();
    assert_eq!(l.pages.len(), 2);
    assert_eq!(l.placements.iter().filter(|q| q.page == 0).count(), 4);
    audit(&l);
    let single = PackParams {
        allow_multi_page: false,
        ..p
    };
    assert_eq!(
        pack_charts(&charts, &single),
        Err(AtlasError::Overflow(128))
    );
}

#[test]
fn occupancy_arithmetic() {
    let mk = |x: u32| Placement {
        class: 1,
        instance: x as i64,
        component: 0,
        page: 0,
        offset: [x, 0],
        size: [64, 64],
    };
    let l = AtlasLayout {
        pages: vec![(128, 128)],
        gutter: 0,
        placements: vec![mk(0), mk(64)],
    };
    assert_eq!(occupancy(&l).unwrap(), 0.5);
    assert_eq!(
        occupancy(&AtlasLayout::default()),
        Err(AtlasError::NoCharts)
    );
}

#[test]
fn random_sets_never_overlap() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let n = rng.random_range(1..30);
        let charts: Vec<UvChart> = (0..n)
            .map(|i| {
                rect_chart(
                    i,
                    rng.random_range(1..200) as f64,
                    rng.random_range(1..200) as f64,
                )
            })
            .collect();
        let p = PackParams {
            gutter: rng.random_range(1..5),
            max_atlas_side: 512,
            allow_multi_page: true,
        };
        let l = pack_charts(&charts, &p).unwrap();
        audit(&l);
        // Deterministic.
        assert_eq!(l, pack_charts(&charts, &p).unwrap());
    }
}

fn solid_raster(c: &UvChart, rgb: [u8; 3]) -> ChartRaster {
    let (w, h) = c.raster_size();
    let mut r = ChartRaster::new(c.label(), c.component, w, h);
    r.color.fill(rgb);
    r.coverage.fill(Coverage::Reference);
    r
}

#[test]
fn compose_blits_and_dilates_gutter() {
    let c = rect_chart(1, 20.0, 10.0);
    let l = pack_charts(std::slice::from_ref(&c), &PackParams::default()).unwrap();
    let mut r = solid_raster(&c, [10, 20, 30]);
    // Left column gets its own color; the gutter next to it must copy it.
    for y in 0..10 {
        let i = r.index(0, y);
        r.color[i] = [200, 0, 0];
    }
    let pages = compose_atlas(&l, std::slice::from_ref(&r)).unwrap();
    let [ox, oy] = l.placements[0].offset;
    assert_eq!(pages[0].rgb(ox, oy + 3), [200, 0, 0]);
    assert_eq!(pages[0].rgb(ox - 1, oy + 3), [200, 0, 0]);
    assert_eq!(pages[0].rgb(ox - 4, oy + 3), [200, 0, 0]);
    assert_eq!(pages[0].rgb(ox + 5, oy + 5), [10, 20, 30]);
    assert_eq!(pages[0].rgb(ox + 5, oy + 10 + 3), [10, 20, 30]);
    // Beyond the gutter stays background.
    assert_eq!(pages[0].rgb(ox + 20 + 4, oy), [0, 0, 0]);

    let bad = solid_raster(&rect_chart(1, 5.0, 5.0), [0; 3]);
    assert!(matches!(
        compose_atlas(&l, &[bad]),
        Err(AtlasError::SizeMismatch { .. })
    ));
}

#[test]
fn dilation_stays_in_own_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let charts: Vec<UvChart> = (0..8)
            .map(|i| {
                rect_chart(
                    i,
                    rng.random_range(4..40) as f64,
                    rng.random_range(4..40) as f64,
                )
            })
            .collect();
        let l = pack_charts(&charts, &PackParams::default()).unwrap();
        let rasters: Vec<ChartRaster> = charts
            .iter()
            .enumerate()
            .map(|(i, c)| solid_raster(c, [i as u8 * 20 + 10, 1, 1]))
            .collect();
        let pages = compose_atlas(&l, &rasters).unwrap();
        let (pw, ph) = l.pages[0];
        for y in 0..ph {
            for x in 0..pw {
                let c = pages[0].rgb(x, y);
                let owner = l.placements.iter().position(|p| {
                    let (x0, y0, x1, y1) = p.expanded(l.gutter);
                    x >= x0 && x < x1 && y >= y0 && y < y1
                });
                match owner {
                    Some(i) => assert_eq!(c, [i as u8 * 20 + 10, 1, 1]),
                    None => assert_eq!(c, [0, 0, 0]),
                }
            }
        }
    }
}

#[test]
fn reprojected_uvs_sample_chart_texels() {
    // Two 1 m wall quads unwrapped at 16 texels/m.
    use crate::inpainting::{rasterize_chart, Sampling};
    let v = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let mut m = LabeledMesh::new(
        v,
        vec![[0, 1, 2], [0, 2, 3]],
        vec![Label::new(CLASS_WALL, 1); 2],
    )
    .unwrap();
    let mut chart = rect_chart(1, 16.0, 16.0);
    chart.face_ids = vec![0, 1];
    let l = pack_charts(std::slice::from_ref(&chart), &PackParams::default()).unwrap();
    let mut r = solid_raster(&chart, [0; 3]);
    for y in 0..16 {
        for x in 0..16 {
            let i = r.index(x, y);
            r.color[i] = [(x * 16) as u8, (y * 16) as u8, 99];
        }
    }
    let pages = compose_atlas(&l, std::slice::from_ref(&r)).unwrap();
    m.is_new = vec![false; 2];
    let out = reproject(
        &m,
        std::slice::from_ref(&chart),
        &l,
        pages.into_iter().map(Arc::new).collect(),
    )
    .unwrap();
    let uv = out.corner_uvs.as_ref().unwrap();
    let side = 32.0;
    // Chart (0, 0) is the bottom-left corner: atlas texel (4, 4 + 16).
    assert!((uv[0][0][0] - 4.0 / side).abs() < 1e-15);
    assert!((uv[0][0][1] - (1.0 - 20.0 / side)).abs() < 1e-15);
    let back = rasterize_chart(&out, &chart, Sampling::Nearest).unwrap();
    assert_eq!(back.color, r.color);

    let mut missing = chart.clone();
    missing.face_ids = vec![0];
    missing.uvs.truncate(1);
    assert!(matches!(
        reproject(&m, &[missing], &l, Vec::new()),
        Err(AtlasError::UnplacedFace(1))
    ));
}
