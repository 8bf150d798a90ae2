use super::*;
use crate::evaluation::{generate_room, BoxObject, RoomSpec};
use crate::inpainting::ExternalHook;
use crate::mesh::{save_mesh, sidecar_path, CLASS_FURNITURE};

fn spec(objects: Vec<BoxObject>) -> RoomSpec {
    RoomSpec {
        extents: [2.0, 1.5, 1.2],
        edge_length: 0.1,
        texel_density: 64.0,
        objects,
        ..RoomSpec::default()
    }
}

fn boxes() -> Vec<BoxObject> {
    vec![
        BoxObject {
            min: [0.3, 0.3, 0.0],
            size: [0.4, 0.35, 0.5],
            class: CLASS_FURNITURE,
        },
        BoxObject {
            min: [1.2, 0.0, 0.0],
            size: [0.5, 0.3, 0.7],
            class: CLASS_FURNITURE,
        },
    ]
}

fn config() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.uv.texel_density = 64.0;
    c.seed = 7;
    c
}

fn write_room(dir: &Path, objects: Vec<BoxObject>) -> (PathBuf, PathBuf) {
    let fx = generate_room(&spec(objects)).unwrap();
    let path = dir.join("room.obj");
    save_mesh(&fx.mesh, &path).unwrap();
    (path.clone(), sidecar_path(&path))
}

#[test]
fn empty_config_is_valid_and_round_trips() {
    let cfg = PipelineConfig::from_toml("").unwrap();
    assert_eq!(cfg, PipelineConfig::default());
    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);

    let mut full = config();
    full.hook = Some(ExternalHook::new("cp {texture} {output} # {mask}"));
    full.fill.max_edge_length = Some(0.25);
    full.inpaint.pyramid_levels = Some(3);
    let text = full.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), full);
}

#[test]
fn config_errors() {
    assert!(matches!(
        PipelineConfig::from_toml("schema_version = 99"),
        Err(PipelineError::SchemaMismatch {
            found: 99,
            expected: SCHEMA_VERSION,
            ..
        })
    ));
    assert!(matches!(
        PipelineConfig::from_toml("bogus = 1"),
        Err(PipelineError::Config(_))
    ));
    assert!(matches!(
        PipelineConfig::from_toml("[pack]\ngutter = 0"),
        Err(PipelineError::Config(_))
    ));
}

#[test]
fn run_produces_clean_room_and_matches_chained_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let (mesh, labels) = write_room(tmp.path(), boxes());
    let cfg = config();
    let out = tmp.path().join("run");
    let report = run_pipeline(&mesh, Some(&labels), &cfg, &out).unwrap();
    assert!(report.errors.is_empty());
    let output = report.output.as_ref().unwrap();
    assert_eq!(output.loose_faces, 0);
    assert!(output.new_faces > 0);
    assert_eq!(report.reconstruct.as_ref().unwrap().open_hole_loops, 0);
    let unwrap = report.unwrap.as_ref().unwrap();
    assert_eq!(unwrap.adjacency_preservation, 1.0);
    assert!((unwrap.distortion.max_stretch - 1.0).abs() <= 1e-6);
    assert!(out.join(REPORT).exists());
    assert!(out.join("pack").join(OUTPUT_MESH).exists());

    // The same stages run one at a time.
    let chain = tmp.path().join("chain");
    let mut input_dir: Option<PathBuf> = None;
    let mut last = None;
    for stage in Stage::ALL {
        let dir = chain.join(stage.name());
        let input = match &input_dir {
            None => StageInput::Mesh {
                mesh: &mesh,
                labels: Some(&labels),
            },
            Some(d) => StageInput::Dump(d),
        };
        last = Some(run_stage(stage, input, &cfg, &dir).unwrap());
        input_dir = Some(dir);
    }
    assert_eq!(last.unwrap().without_timings(), report.without_timings());
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    for f in [
        OUTPUT_MESH,
        "output_page0.png",
        "output.labels.json",
        LAYOUT,
    ] {
        assert!(
            read(out.join("pack").join(f)) == read(chain.join("pack").join(f)),
            "{f} differs"
        );
    }
}

#[test]
fn no_loose_objects_keeps_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let (mesh, labels) = write_room(tmp.path(), Vec::new());
    let out = tmp.path().join("run");
    run_pipeline(&mesh, Some(&labels), &config(), &out).unwrap();
    let cm = crate::mesh::ClassMap::default();
    let a = load_mesh(&mesh, Some(&labels), &cm).unwrap();
    let result = out.join("pack").join(OUTPUT_MESH);
    let b = load_mesh(&result, Some(&sidecar_path(&result)), &cm).unwrap();
    assert_eq!(a.vertices, b.vertices);
    assert_eq!(a.triangles, b.triangles);
    assert_eq!(a.labels, b.labels);
    assert!(b.is_new.iter().all(|n| !n));
}

#[test]
fn missing_labels_fail_before_segmenting() {
    let tmp = tempfile::tempdir().unwrap();
    let (mesh, _) = write_room(tmp.path(), Vec::new());
    let out = tmp.path().join("run");
    let missing = tmp.path().join("nope.labels.json");
    let err = run_pipeline(&mesh, Some(&missing), &config(), &out).unwrap_err();
    assert_eq!(err, PipelineError::MissingInput(missing));
    assert!(!out.join("segment").exists());
}

#[test]
fn stale_dump_is_rejected_with_both_versions() {
    let tmp = tempfile::tempdir().unwrap();
    let (mesh, labels) = write_room(tmp.path(), Vec::new());
    let seg = tmp.path().join("segment");
    run_stage(
        Stage::Segment,
        StageInput::Mesh {
            mesh: &mesh,
            labels: Some(&labels),
        },
        &config(),
        &seg,
    )
    .unwrap();
    let path = seg.join(MANIFEST);
    let mut m: serde_json::Value = read_json(&path).unwrap();
    m["schema_version"] = serde_json::json!(0);
    write_json(&path, &m).unwrap();
    let err = run_stage(
        Stage::Reconstruct,
        StageInput::Dump(&seg),
        &config(),
        &tmp.path().join("r"),
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(matches!(
        err,
        PipelineError::SchemaMismatch {
            found: 0,
            expected: SCHEMA_VERSION,
            ..
        }
    ));
    assert!(
        msg.contains("version 0") && msg.contains(&format!("version {SCHEMA_VERSION}")),
        "{msg}"
    );

    // A dump from the wrong stage.
    m["schema_version"] = serde_json::json!(SCHEMA_VERSION);
    write_json(&path, &m).unwrap();
    let err = run_stage(
        Stage::Unwrap,
        StageInput::Dump(&seg),
        &config(),
        &tmp.path().join("u"),
    )
    .unwrap_err();
    assert_eq!(
        err,
        PipelineError::WrongIntermediate {
            expected: Stage::Reconstruct,
            found: Stage::Segment
        }
    );
    let err = run_stage(
        Stage::Reconstruct,
        StageInput::Dump(&tmp.path().join("void")),
        &config(),
        &tmp.path().join("v"),
    )
    .unwrap_err();
    assert!(matches!(err, PipelineError::MissingIntermediate(_)));
}

#[test]
fn unwrap_stage_writes_charts_and_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let (mesh, labels) = write_room(tmp.path(), boxes());
    let cfg = config();
    let seg = tmp.path().join("s");
    let rec = tmp.path().join("r");
    let unw = tmp.path().join("u");
    run_stage(
        Stage::Segment,
        StageInput::Mesh {
            mesh: &mesh,
            labels: Some(&labels),
        },
        &cfg,
        &seg,
    )
    .unwrap();
    run_stage(Stage::Reconstruct, StageInput::Dump(&seg), &cfg, &rec).unwrap();
    run_stage(Stage::Unwrap, StageInput::Dump(&rec), &cfg, &unw).unwrap();
    let charts: Vec<UvChart> = read_json(&unw.join(CHARTS)).unwrap();
    assert!(charts.len() >= 6);
    let svg = std::fs::read_to_string(unw.join(CHARTS_SVG)).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
}
