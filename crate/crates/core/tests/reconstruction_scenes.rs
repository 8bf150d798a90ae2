mod common;

use common::*;
use defurnish::evaluation::{geometric_error, RoomSpec};
use defurnish::mesh::{Label, CLASS_FLOOR, CLASS_WALL};
use defurnish::reconstruction::{intersect_three, ReconstructParams, RemovalPlan};
use defurnish::segmentation::PlaneSegment;

#[test]
fn floor_and_wall_fills_stop_at_their_shared_line() {
    for rot in [0.0, 25.0] {
        let p = prepare(&RoomSpec {
            objects: vec![furniture([0.55, 0.0, 0.0], [0.6, 0.45, 0.7])],
            ..small_room(rot)
        });
        let (out, report) = p.run(&p.grouped());
        assert!(report.failures.is_empty());
        let floor = segment_of(&p, Label::new(CLASS_FLOOR, 0));
        let wall = segment_of(&p, Label::new(CLASS_WALL, 2));
        let beyond = |verts: &[u32], other: &PlaneSegment| {
            verts
                .iter()
                .map(|&v| {
                    -(other.plane().signed_distance(&out.vertices[v as usize]) * other.facing)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let fv = new_vertices(&out, floor.label());
        let wv = new_vertices(&out, wall.label());
        assert!(!fv.is_empty() && !wv.is_empty());
        // Fills reach the line but never cross it.
        let (bf, bw) = (beyond(&fv, wall), beyond(&wv, floor));
        assert!((-1e-9..=1e-9).contains(&bf), "floor {bf}");
        assert!((-1e-9..=1e-9).contains(&bw), "wall {bw}");
    }
}

#[test]
fn corner_fill_has_the_three_plane_vertex() {
    for rot in [0.0, 40.0] {
        let p = prepare(&RoomSpec {
            objects: vec![furniture([0.0, 0.0, 0.0], [0.45, 0.35, 0.5])],
            ..small_room(rot)
        });
        let (out, report) = p.run(&p.grouped());
        assert!(report.failures.is_empty());
        let ids = [
            Label::new(CLASS_FLOOR, 0),
            Label::new(CLASS_WALL, 2),
            Label::new(CLASS_WALL, 5),
        ]
        .map(|l| segment_of(&p, l).plane());
        let corner = intersect_three(&ids[0], &ids[1], &ids[2]).unwrap();
        for l in [
            Label::new(CLASS_FLOOR, 0),
            Label::new(CLASS_WALL, 2),
            Label::new(CLASS_WALL, 5),
        ] {
            let best = new_vertices(&out, l)
                .iter()
                .map(|&v| (out.vertices[v as usize] - corner).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-9, "{l:?} {best}");
        }
        let g = geometric_error(&out, &p.fixture.truth, &ReconstructParams::default()).unwrap();
        assert_eq!(g.open_holes, 0);
    }
}

#[test]
fn no_objects_is_identity() {
    let p = prepare(&small_room(10.0));
    let (out, report) = p.run(&p.grouped());
    let input = p.segmentation.apply(&p.fixture.mesh);
    assert_eq!(report.removed_faces, 0);
    assert_eq!(out.vertices, input.vertices);
    assert_eq!(out.triangles, input.triangles);
    assert_eq!(out.labels, input.labels);
    assert!(out.is_new.iter().all(|n| !n));
}

#[test]
fn disjoint_groups_are_order_invariant() {
    let p = prepare(&RoomSpec {
        objects: vec![
            furniture([0.2, 0.25, 0.0], [0.3, 0.3, 0.4]),
            furniture([0.9, 0.0, 0.0], [0.4, 0.3, 0.6]),
            furniture([1.55, 1.05, 0.0], [0.45, 0.45, 0.5]),
        ],
        ..small_room(15.0)
    });
    assert_eq!(p.grouped().groups.len(), 3);
    let mut reference = None;
    for perm in permutations(3) {
        let plan = RemovalPlan {
            groups: perm.iter().map(|&i| vec![p.boxes[i].label()]).collect(),
        };
        let (out, report) = p.run(&plan);
        assert!(report.failures.is_empty());
        let g = canonical_geometry(&out);
        match &reference {
            None => reference = Some(g),
            Some(r) => assert!(r == &g, "order {perm:?} differs"),
        }
    }
}

#[test]
fn grouped_removal_is_no_worse_than_sequential() {
    let p = prepare(&RoomSpec {
        objects: vec![
            furniture([0.4, 0.3, 0.0], [0.6, 0.5, 0.45]),
            furniture([0.75, 0.55, 0.0], [0.6, 0.6, 0.8]),
        ],
        ..small_room(0.0)
    });
    let grouped = p.grouped();
    assert_eq!(grouped.groups.len(), 1);
    let params = ReconstructParams::default();
    let (g_out, _) = p.run(&grouped);
    let (s_out, _) = p.run(&RemovalPlan::singletons(&p.boxes));
    let g = geometric_error(&g_out, &p.fixture.truth, &params).unwrap();
    let s = geometric_error(&s_out, &p.fixture.truth, &params).unwrap();
    assert!(g.rmse <= s.rmse, "grouped {} sequential {}", g.rmse, s.rmse);
    assert_eq!(g.open_holes, 0);
}
