mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use defurnish::atlas::{pack_charts, AtlasLayout, PackParams};
use defurnish::evaluation::{generate_room, RoomSpec};
use defurnish::geometry::{Frame, Vec3};
use defurnish::inpainting::{inpaint_exemplar, ChartRaster, Coverage, InpaintConfig};
use defurnish::mesh::{
    build_adjacency, edge_key, load_mesh, reassemble, save_mesh, sidecar_path, split_by_instance,
    ClassMap, Label, LabeledMesh, CLASS_CEILING, CLASS_FLOOR, CLASS_FURNITURE, CLASS_WALL,
};
use defurnish::pipeline::PipelineConfig;
use defurnish::reconstruction::plan_removal_order;
use defurnish::segmentation::{
    classify_element_orientation, fit_plane_ransac, segment_structural_planes, FaceSample,
    ObjectBox, Orientation, OrientationParams, Plane, RansacParams,
};
use defurnish::uv_mapping::{mark_semantic_seams, UvChart};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLASSES: [i64; 4] = [CLASS_WALL, CLASS_FLOOR, CLASS_CEILING, CLASS_FURNITURE];

/// Height-field grid of `nx` x `ny` quads with random heights and labels.
fn grid_mesh(nx: usize, ny: usize, seed: u64) -> LabeledMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Vec3::new(
                i as f64 * 0.37,
                j as f64 * 0.21,
                rng.random_range(-1.0..1.0),
            ));
        }
    }
    let id = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut t = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let labels = (0..t.len())
        .map(|_| Label::new(CLASSES[rng.random_range(0..4)], rng.random_range(0..3)))
        .collect();
    LabeledMesh::new(v, t, labels).unwrap()
}

fn room_spec(extents: [f64; 3], rotation_deg: f64, boxes: usize, seed: u64) -> RoomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = (0..boxes)
        .map(|_| {
            let size = [
                rng.random_range(0.2..0.5),
                rng.random_range(0.2..0.5),
                rng.random_range(0.2..0.6),
            ];
            let x = rng.random_range(0.1..extents[0] - size[0] - 0.1);
            let y = rng.random_range(0.1..extents[1] - size[1] - 0.1);
            furniture([x, y, 0.0], size)
        })
        .collect();
    RoomSpec {
        extents,
        edge_length: 0.1,
        texel_density: 32.0,
        rotation_deg,
        objects,
        seed,
        ..RoomSpec::default()
    }
}

fn unit(v: [f64; 3]) -> Option<Vec3> {
    let v = Vec3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_files_round_trip(nx in 1usize..6, ny in 1usize..6, seed in any::<u64>(), ply in any::<bool>()) {
        let mesh = grid_mesh(nx, ny, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if ply { "m.ply" } else { "m.obj" });
        save_mesh(&mesh, &path).unwrap();
        let back = load_mesh(&path, Some(&sidecar_path(&path)), &ClassMap::default()).unwrap();
        prop_assert_eq!(&back.vertices, &mesh.vertices);
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        prop_assert_eq!(&back.labels, &mesh.labels);
    }

    #[test]
    fn adjacency_counts_every_face_edge_and_split_partitions(nx in 1usize..7, ny in 1usize..7, seed in any::<u64>()) {
        let mesh = grid_mesh(nx, ny, seed);
        let adj = build_adjacency(&mesh);
        let incidences: usize = adj.edges.values().map(|f| f.len()).sum();
        prop_assert_eq!(incidences, 3 * mesh.face_count());

        let parts = split_by_instance(&mesh);
        let mut seen: Vec<u32> = parts.iter().flat_map(|p| p.face_map.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..mesh.face_count() as u32).collect::<Vec<_>>());
        for p in &parts {
            prop_assert!(p.mesh.labels.iter().all(|l| *l == p.key));
        }
        let whole = reassemble(&parts);
        prop_assert_eq!(&whole.triangles, &mesh.triangles);
        prop_assert_eq!(&whole.labels, &mesh.labels);
        prop_assert_eq!(&whole.vertices, &mesh.vertices);
    }

    #[test]
    fn seams_match_a_brute_force_scan(nx in 1usize..6, ny in 1usize..6, seed in any::<u64>()) {
        let mesh = grid_mesh(nx, ny, seed);
        let mut brute = BTreeSet::new();
        for t in &mesh.triangles {
            for k in 0..3 {
                let e = edge_key(t[k], t[(k + 1) % 3]);
                let others: Vec<usize> = (0..mesh.face_count())
                    .filter(|&g| {
                        let u = mesh.triangles[g];
                        (0..3).any(|m| edge_key(u[m], u[(m + 1) % 3]) == e)
                    })
                    .collect();
                let same = others.len() == 2 && mesh.labels[others[0]] == mesh.labels[others[1]];
                if !same {
                    brute.insert(e);
                }
            }
        }
        prop_assert_eq!(mark_semantic_seams(&mesh).edges, brute);
    }

    #[test]
    fn orientation_ignores_normal_sign(n in prop::array::uniform3(-1.0f64..1.0), angle in 1.0f64..44.0) {
        let Some(n) = unit(n) else { return Ok(()) };
        let up = OrientationParams::default().up_axis;
        prop_assert_eq!(
            classify_element_orientation(&n, &up, angle),
            classify_element_orientation(&-n, &up, angle)
        );
    }

    #[test]
    fn ransac_is_deterministic_and_inliers_are_tight(
        n in prop::array::uniform3(-1.0f64..1.0),
        offset in -3.0f64..3.0,
        count in 40usize..120,
        outliers in 0.0f64..0.3,
        seed in any::<u64>(),
    ) {
        let Some(n) = unit(n) else { return Ok(()) };
        let plane = Plane::new(n, offset).unwrap();
        let (a, b) = {
            let a = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let a = (a - n * a.dot(&n)).normalize();
            (a, n.cross(&a))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let samples: Vec<FaceSample> = (0..count)
            .map(|i| {
                let on = plane.project(&Vec3::zeros())
                    + a * rng.random_range(-2.0..2.0)
                    + b * rng.random_range(-2.0..2.0);
                let (centroid, normal) = if rng.random_bool(outliers) {
                    let r = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    (on + r, Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0).normalize())
                } else {
                    (on + n * rng.random_range(-0.005..0.005), n)
                };
                FaceSample { face: i as u32, centroid, normal, area: rng.random_range(0.01..0.05) }
            })
            .collect();
        let params = RansacParams::default();
        let first = fit_plane_ransac(&samples, &params, seed);
        let again = fit_plane_ransac(&samples, &params, seed);
        prop_assert_eq!(format!("{first:?}"), format!("{again:?}"));
        if let Ok((p, faces)) = first {
            for f in faces {
                let d = p.signed_distance(&samples[f as usize].centroid).abs();
                prop_assert!(d <= params.inlier_dist, "{}", d);
            }
        }
    }

    #[test]
    fn overlapping_boxes_share_a_removal_group(
        raw in prop::collection::vec((prop::array::uniform3(0.0f64..3.0), prop::array::uniform3(0.05f64..1.0), 0.0f64..0.1), 1..12),
    ) {
        let boxes: Vec<ObjectBox> = raw
            .iter()
            .enumerate()
            .map(|(i, (min, size, pad))| ObjectBox {
                class: CLASS_FURNITURE,
                instance: i as i64,
                min: Vec3::from(*min),
                max: Vec3::from(*min) + Vec3::from(*size),
                padding: *pad,
            })
            .collect();
        let plan = plan_removal_order(&boxes);
        let mut group_of = BTreeMap::new();
        for (g, labels) in plan.groups.iter().enumerate() {
            for l in labels {
                prop_assert!(group_of.insert(*l, g).is_none(), "{:?} in two groups", l);
            }
        }
        prop_assert_eq!(group_of.len(), boxes.len());
        for x in &boxes {
            for y in &boxes {
                if x.overlaps(y) {
                    prop_assert_eq!(group_of[&x.label()], group_of[&y.label()]);
                }
            }
        }
    }

    #[test]
    fn config_round_trips_through_toml(
        seed in any::<u64>(),
        padding in 0.0f64..0.2,
        grouped in any::<bool>(),
        density in 16.0f64..1024.0,
        gutter in 1u32..16,
        angle in 1.0f64..44.0,
    ) {
        let mut c = PipelineConfig { seed, vertical_angle: angle, ..PipelineConfig::default() };
        c.removal.padding = padding;
        c.removal.grouped = grouped;
        c.uv.texel_density = density;
        c.pack.gutter = gutter;
        let back = PipelineConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn rooms_are_reproducible_and_exact(
        x in 1.5f64..3.0,
        y in 1.5f64..3.0,
        z in 1.0f64..2.5,
        rot in 0.0f64..360.0,
        boxes in 0usize..3,
        seed in any::<u64>(),
    ) {
        let spec = room_spec([x, y, z], rot, boxes, seed);
        let a = generate_room(&spec).unwrap();
        let b = generate_room(&spec).unwrap();
        prop_assert_eq!(&a.mesh.vertices, &b.mesh.vertices);
        prop_assert_eq!(&a.mesh.triangles, &b.mesh.triangles);
        prop_assert_eq!(&a.mesh.labels, &b.mesh.labels);
        prop_assert_eq!(&a.mesh.corner_uvs, &b.mesh.corner_uvs);
        prop_assert!(a.mesh.textures.iter().zip(&b.mesh.textures).all(|(p, q)| p.pixels == q.pixels));
        let truth = &a.truth;
        for e in &truth.elements {
            for f in truth.mesh.faces_with_label(e.label()) {
                for p in truth.mesh.corners(f) {
                    let r = e.plane.signed_distance(&p).abs();
                    prop_assert!(r <= 1e-12, "{:?} residual {}", e.label(), r);
                }
            }
        }
    }

    #[test]
    fn segments_are_disjoint_and_near_their_planes(
        rot in 0.0f64..360.0,
        boxes in 0usize..3,
        seed in any::<u64>(),
    ) {
        let fx = generate_room(&room_spec([2.0, 1.6, 1.2], rot, boxes, seed)).unwrap();
        let params = RansacParams::default();
        let seg = segment_structural_planes(&fx.mesh, &ClassMap::default(), &params, &OrientationParams::default(), seed)
            .unwrap();
        let mut owner = BTreeMap::new();
        for s in &seg.segments {
            prop_assert!((s.normal.norm() - 1.0).abs() <= 1e-9);
            for &f in &s.face_ids {
                prop_assert!(owner.insert(f, s.label()).is_none(), "face {} twice", f);
                let d = s.plane().signed_distance(&fx.mesh.face_centroid(f as usize)).abs();
                prop_assert!(d <= 3.0 * params.inlier_dist, "face {} off by {}", f, d);
            }
        }
        for u in &seg.unplaned {
            for &f in &u.face_ids {
                prop_assert!(owner.insert(f, u.label()).is_none(), "face {} twice", f);
            }
        }
    }

    #[test]
    fn exemplar_fill_keeps_reference_texels(
        w in 6u32..40,
        h in 6u32..40,
        seed in any::<u64>(),
        constant in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = ChartRaster::new(Label::new(CLASS_WALL, 1), 0, w, h);
        let c = [rng.random(), rng.random(), rng.random()];
        for i in 0..r.color.len() {
            r.coverage[i] = match rng.random_range(0..10) {
                0 => Coverage::Outside,
                1..=3 => Coverage::Fill,
                _ => Coverage::Reference,
            };
            r.color[i] = if constant { c } else { [rng.random(), rng.random(), rng.random()] };
            if r.coverage[i] == Coverage::Fill {
                r.color[i] = [0, 0, 0];
            }
        }
        r.coverage[0] = Coverage::Reference;
        r.color[0] = c;
        r.seed = seed;
        let cfg = InpaintConfig::default();
        let out = inpaint_exemplar(&r, &cfg).unwrap();
        prop_assert_eq!(&out, &inpaint_exemplar(&r, &cfg).unwrap());
        prop_assert_eq!(&out.coverage, &r.coverage);
        for i in 0..r.color.len() {
            match r.coverage[i] {
                Coverage::Reference => prop_assert_eq!(out.color[i], r.color[i]),
                Coverage::Fill if constant => prop_assert_eq!(out.color[i], c),
                _ => {}
            }
        }
    }
}

fn rect_chart(instance: i64, w: f64, h: f64) -> UvChart {
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

fn claimed_twice(layout: &AtlasLayout) -> usize {
    let mut grids: Vec<Vec<bool>> = layout
        .pages
        .iter()
        .map(|&(w, h)| vec![false; (w * h) as usize])
        .collect();
    let mut bad = 0;
    for p in &layout.placements {
        let (pw, ph) = layout.pages[p.page as usize];
        let (x0, y0, x1, y1) = p.expanded(layout.gutter);
        for y in y0..y1 {
            for x in x0..x1 {
                if x >= pw || y >= ph {
                    bad += 1;
                    continue;
                }
                let cell = &mut grids[p.page as usize][(y * pw + x) as usize];
                bad += usize::from(*cell);
                *cell = true;
            }
        }
    }
    bad
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn packing_is_disjoint_translation_only_and_deterministic(
        sides in prop::collection::vec((1.0f64..300.0, 1.0f64..300.0), 1..40),
        gutter in 1u32..8,
        max_side in prop::sample::select(vec![512u32, 1024, 8192]),
    ) {
        let charts: Vec<UvChart> = sides.iter().enumerate().map(|(i, &(w, h))| rect_chart(i as i64, w, h)).collect();
        let params = PackParams { gutter, max_atlas_side: max_side, allow_multi_page: true };
        let layout = pack_charts(&charts, &params).unwrap();
        prop_assert_eq!(&layout, &pack_charts(&charts, &params).unwrap());
        prop_assert_eq!(claimed_twice(&layout), 0);
        for &(w, h) in &layout.pages {
            prop_assert!(w.is_power_of_two() && h.is_power_of_two() && w <= max_side && h <= max_side);
        }
        prop_assert_eq!(layout.placements.len(), charts.len());
        for c in &charts {
            let p = layout.placements.iter().find(|p| p.instance == c.instance).unwrap();
            let (w, h) = c.raster_size();
            prop_assert_eq!(p.size, [w, h]);
        }
    }
}
