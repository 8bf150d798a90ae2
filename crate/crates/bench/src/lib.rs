//! Fixtures shared by the stage benchmarks.

use std::path::{Path, PathBuf};

use defurnish::evaluation::{generate_room, BoxObject, RoomSpec};
use defurnish::mesh::{save_mesh, CLASS_FURNITURE};
use defurnish::pipeline::{run_pipeline, PipelineConfig, Stage};

/// A 2 x 1.5 x 1.2 m room with two pieces of furniture.
pub fn bench_room() -> RoomSpec {
    let furniture = |min, size| BoxObject {
        min,
        size,
        class: CLASS_FURNITURE,
    };
    RoomSpec {
        extents: [2.0, 1.5, 1.2],
        edge_length: 0.1,
        texel_density: 64.0,
        rotation_deg: 20.0,
        objects: vec![
            furniture([0.3, 0.3, 0.0], [0.45, 0.35, 0.5]),
            furniture([1.2, 0.0, 0.0], [0.5, 0.3, 0.8]),
        ],
        ..RoomSpec::default()
    }
}

/// Writes the room mesh into `dir` and runs the whole pipeline once so every
/// stage has an input dump. Returns the mesh path.
pub fn prepare(dir: &Path, spec: &RoomSpec, config: &PipelineConfig) -> PathBuf {
    let fx = generate_room(spec).expect("valid room");
    let mesh = dir.join("room.obj");
    save_mesh(&fx.mesh, &mesh).expect("mesh written");
    run_pipeline(&mesh, None, config, &dir.join("run")).expect("pipeline runs");
    mesh
}

/// Dump directory a stage reads from, as laid out by [`prepare`].
pub fn input_dump(dir: &Path, stage: Stage) -> Option<PathBuf> {
    stage.previous().map(|p| dir.join("run").join(p.name()))
}
