//! Stage orchestration: segment, reconstruct, unwrap, inpaint, pack.

mod config;
mod dump;
mod report;

#[cfg(test)]
mod tests;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{FillConfig, PipelineConfig, RemovalConfig, UvConfig};
pub use dump::{
    read_json, read_manifest, read_mesh, read_rasters, write_json, Manifest, SegmentArtifacts,
    CHARTS, CHARTS_SVG, LAYOUT, MANIFEST, MESH, OUTPUT_MESH, RASTERS, REPORT, SEGMENTATION,
    TIMINGS,
};
pub use report::{
    DistortionSummary, InpaintSummary, MeshStats, PackSummary, PipelineReport, ReconstructSummary,
    SegmentSummary, StageFailure, UnwrapSummary,
};

use crate::atlas::{compose_atlas, occupancy, pack_charts, reproject, AtlasLayout};
use crate::inpainting::{inpaint_all, rasterize_chart, ChartRaster, Coverage};
use crate::mesh::{load_mesh, Label, LabeledMesh};
use crate::reconstruction::{count_open_holes, plan_removal_order, reconstruct_scene, RemovalPlan};
use crate::segmentation::{object_bounding_boxes, segment_structural_planes, PlaneSegment};
use crate::uv_mapping::{
    adjacency_preservation, assign_texel_density, charts_svg, compute_distortion, orientation_axes,
    unwrap_element, unwrap_per_face, unwrap_unplaned, UvChart,
};

/// Version of configs and stage dumps this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Segment,
    Reconstruct,
    Unwrap,
    Inpaint,
    Pack,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Segment,
        Stage::Reconstruct,
        Stage::Unwrap,
        Stage::Inpaint,
        Stage::Pack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Reconstruct => "reconstruct",
            Stage::Unwrap => "unwrap",
            Stage::Inpaint => "inpaint",
            Stage::Pack => "pack",
        }
    }

    /// The stage whose dump this stage reads.
    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|&s| s == self)?;
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{what}: schema version {found} is incompatible with this build's version {expected}")]
    SchemaMismatch {
        what: String,
        found: u32,
        expected: u32,
    },
    #[error("expected a {expected} dump, found a {found} dump")]
    WrongIntermediate { expected: Stage, found: Stage },
    #[error("missing intermediate {0}")]
    MissingIntermediate(PathBuf),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("io: {0}")]
    Io(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

/// Where a stage reads from: the raw mesh for `segment`, the previous
/// stage's dump directory otherwise.
#[derive(Clone, Copy, Debug)]
pub enum StageInput<'a> {
    Mesh {
        mesh: &'a Path,
        labels: Option<&'a Path>,
    },
    Dump(&'a Path),
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))
}

/// Runs one stage and writes its dump (manifest, carried artifacts and the
/// stage's own outputs) into `out`. Returns the accumulated report.
pub fn run_stage(
    stage: Stage,
    input: StageInput<'_>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let mut report = match (stage, input) {
        (Stage::Segment, StageInput::Mesh { mesh, labels }) => {
            create_dir(out)?;
            segment_stage(mesh, labels, config, out)?
        }
        (Stage::Segment, StageInput::Dump(_)) => {
            return Err(PipelineError::Config(
                "segment reads a mesh, not a dump".into(),
            ));
        }
        (_, StageInput::Mesh { .. }) => {
            return Err(PipelineError::Config(format!(
                "{stage} reads the previous stage's dump"
            )));
        }
        (_, StageInput::Dump(dir)) => {
            let prev = stage.previous().expect("non-first stage");
            let manifest = read_manifest(dir, prev)?;
            create_dir(out)?;
            let report = manifest.report;
            match stage {
                Stage::Reconstruct => reconstruct_stage(dir, report, config, out)?,
                Stage::Unwrap => unwrap_stage(dir, report, config, out)?,
                Stage::Inpaint => inpaint_stage(dir, report, config, out)?,
                Stage::Pack => pack_stage(dir, report, config, out)?,
                Stage::Segment => unreachable!(),
            }
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    report.timings.insert(stage.name().to_string(), elapsed);
    log::info!("stage={stage} elapsed={elapsed:.3}s");
    dump::write_manifest(out, stage, &report)?;
    if stage == Stage::Pack {
        dump::write_report(out, &report)?;
    }
    Ok(report)
}

/// Runs every stage, each reading the previous stage's dump from
/// `out/<stage>`. The report goes to `out/report.json` whether or not a
/// stage fails; earlier dumps are kept.
pub fn run_pipeline(
    mesh: &Path,
    labels: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    if !mesh.exists() {
        return Err(PipelineError::MissingInput(mesh.to_path_buf()));
    }
    if let Some(l) = labels {
        if !l.exists() {
            return Err(PipelineError::MissingInput(l.to_path_buf()));
        }
    }
    create_dir(out)?;
    let mut last: Option<(PathBuf, PipelineReport)> = None;
    for stage in Stage::ALL {
        let dir = out.join(stage.name());
        let input = match &last {
            None => StageInput::Mesh { mesh, labels },
            Some((prev, _)) => StageInput::Dump(prev),
        };
        match run_stage(stage, input, config, &dir) {
            Ok(r) => last = Some((dir, r)),
            Err(e) => {
                let mut r = last.map(|l| l.1).unwrap_or_else(|| base_report(config));
                r.errors.push(StageFailure {
                    stage: stage.name().into(),
                    message: e.to_string(),
                });
                dump::write_report(out, &r)?;
                log::error!("stage={stage} error={e}");
                return Err(e);
            }
        }
    }
    let report = last.expect("stages ran").1;
    dump::write_report(out, &report)?;
    Ok(report)
}

fn base_report(config: &PipelineConfig) -> PipelineReport {
    PipelineReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        ..PipelineReport::default()
    }
}

fn segment_stage(
    mesh_path: &Path,
    labels: Option<&Path>,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    if let Some(l) = labels {
        if !l.exists() {
            return Err(PipelineError::MissingInput(l.to_path_buf()));
        }
    }
    let mesh = load_mesh(mesh_path, labels, &config.classes)
        .map_err(|e| PipelineError::stage(Stage::Segment, e))?;
    let mut report = base_report(config);
    report.input = Some(MeshStats::of(&mesh, &config.classes));
    let seg = segment_structural_planes(
        &mesh,
        &config.classes,
        &config.ransac,
        &config.orientation(),
        config.seed,
    )
    .map_err(|e| PipelineError::stage(Stage::Segment, e))?;
    let relabeled = seg.apply(&mesh);
    let boxes = object_bounding_boxes(&relabeled, &config.classes, config.removal.padding);
    let plan = if config.removal.grouped {
        plan_removal_order(&boxes)
    } else {
        RemovalPlan::singletons(&boxes)
    };
    let summary = SegmentSummary {
        planes: seg.segments.len(),
        unplaned_groups: seg.unplaned.len(),
        unplaned_faces: seg.unplaned.iter().map(|u| u.face_ids.len()).sum(),
        objects: boxes.len(),
        removal_groups: plan.groups.len(),
        warnings: seg.warnings.clone(),
    };
    log::info!(
        "stage=segment planes={} unplaned_groups={} objects={} groups={}",
        summary.planes,
        summary.unplaned_groups,
        summary.objects,
        summary.removal_groups
    );
    report.segment = Some(summary);
    dump::write_mesh(out, MESH, &relabeled)?;
    write_json(
        &out.join(SEGMENTATION),
        &SegmentArtifacts {
            segmentation: seg,
            boxes,
            plan,
        },
    )?;
    Ok(report)
}

fn reconstruct_stage(
    dir: &Path,
    mut report: PipelineReport,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    let mesh = read_mesh(dir, &config.classes)?;
    let art: SegmentArtifacts = read_json(&dir.join(SEGMENTATION))?;
    let params = config.reconstruct_params();
    let (result, rec) = reconstruct_scene(
        &mesh,
        &art.segmentation,
        &art.boxes,
        &art.plan,
        &config.classes,
        &params,
    );
    let open = count_open_holes(&result, &art.segmentation.segments, &params);
    log::info!(
        "stage=reconstruct removed_faces={} filled_elements={} open_hole_loops={} failures={}",
        rec.removed_faces,
        rec.filled_faces.len(),
        open,
        rec.failures.len()
    );
    report.reconstruct = Some(ReconstructSummary {
        report: rec,
        open_hole_loops: open,
    });
    dump::write_mesh(out, MESH, &result)?;
    write_json(&out.join(SEGMENTATION), &art)?;
    Ok(report)
}

/// Charts for every face: one projection per planar element (split into
/// connected components), fallback charts for everything else.
pub fn unwrap_mesh(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    config: &PipelineConfig,
) -> Result<(Vec<UvChart>, UnwrapSummary), PipelineError> {
    let labels = mesh.distinct_labels();
    let per_label: Vec<(Vec<UvChart>, bool)> = labels
        .par_iter()
        .map(|&l| chart_label(mesh, segments, l, config))
        .collect();
    let mut charts = Vec::new();
    let mut fallback = 0;
    for (c, fb) in per_label {
        if fb {
            fallback += c.len();
        }
        charts.extend(c);
    }
    let charts = assign_texel_density(&charts, config.uv.texel_density, config.uv.max_chart_texels)
        .map_err(|e| PipelineError::stage(Stage::Unwrap, e))?;
    let stats: Vec<_> = charts
        .par_iter()
        .map(|c| compute_distortion(mesh, c))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::stage(Stage::Unwrap, e))?;
    let mut d = DistortionSummary {
        min_stretch: f64::INFINITY,
        max_stretch: f64::NEG_INFINITY,
        mean_stretch: 0.0,
    };
    let mut n = 0usize;
    for s in &stats {
        for &x in &s.per_face {
            d.min_stretch = d.min_stretch.min(x);
            d.max_stretch = d.max_stretch.max(x);
            d.mean_stretch += x;
            n += 1;
        }
    }
    if n == 0 {
        d = DistortionSummary::default();
    } else {
        d.mean_stretch /= n as f64;
    }
    let summary = UnwrapSummary {
        charts: charts.len(),
        fallback_charts: fallback,
        downscaled_charts: charts
            .iter()
            .filter(|c| c.requested_density.is_some())
            .count(),
        distortion: d,
        adjacency_preservation: adjacency_preservation(mesh, &charts),
    };
    Ok((charts, summary))
}

fn chart_label(
    mesh: &LabeledMesh,
    segments: &[PlaneSegment],
    l: Label,
    config: &PipelineConfig,
) -> (Vec<UvChart>, bool) {
    let axes = config.axes();
    if let Some(seg) = segments.iter().find(|s| s.label() == l) {
        let planar = orientation_axes(&seg.facing_normal(), seg.orientation, &axes)
            .ok()
            .and_then(|uv| unwrap_element(mesh, seg, uv).ok());
        match planar {
            Some(c) => (c, false),
            None => (unwrap_per_face(mesh, l, &axes, config.vertical_angle), true),
        }
    } else {
        (
            unwrap_unplaned(mesh, l, &axes, config.vertical_angle).0,
            true,
        )
    }
}

fn unwrap_stage(
    dir: &Path,
    mut report: PipelineReport,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    let mesh = read_mesh(dir, &config.classes)?;
    let art: SegmentArtifacts = read_json(&dir.join(SEGMENTATION))?;
    let (charts, summary) = unwrap_mesh(&mesh, &art.segmentation.segments, config)?;
    log::info!(
        "stage=unwrap charts={} fallback={} max_stretch={:.6} adjacency={:.6}",
        summary.charts,
        summary.fallback_charts,
        summary.distortion.max_stretch,
        summary.adjacency_preservation
    );
    report.unwrap = Some(summary);
    dump::write_mesh(out, MESH, &mesh)?;
    write_json(&out.join(SEGMENTATION), &art)?;
    write_json(&out.join(CHARTS), &charts)?;
    let svg_path = out.join(CHARTS_SVG);
    std::fs::write(&svg_path, charts_svg(&charts))
        .map_err(|e| PipelineError::Io(format!("{}: {e}", svg_path.display())))?;
    Ok(report)
}

fn inpaint_stage(
    dir: &Path,
    mut report: PipelineReport,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    let mesh = read_mesh(dir, &config.classes)?;
    let art: SegmentArtifacts = read_json(&dir.join(SEGMENTATION))?;
    let charts: Vec<UvChart> = read_json(&dir.join(CHARTS))?;
    let rasters: Vec<ChartRaster> = charts
        .par_iter()
        .map(|c| rasterize_chart(&mesh, c, config.uv.sampling))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::stage(Stage::Inpaint, e))?;
    let outcome = inpaint_all(&rasters, &config.inpaint, config.hook.as_ref(), config.seed)
        .map_err(|e| PipelineError::stage(Stage::Inpaint, e))?;
    let summary = InpaintSummary {
        charts: rasters.len(),
        charts_with_fill: rasters
            .iter()
            .filter(|r| r.count(Coverage::Fill) > 0)
            .count(),
        fill_texels: rasters.iter().map(|r| r.count(Coverage::Fill)).sum(),
        backend: if config.hook.is_some() {
            "external"
        } else {
            "exemplar"
        }
        .into(),
        failures: outcome.failures.clone(),
        warnings: outcome.warnings.clone(),
    };
    log::info!(
        "stage=inpaint charts={} with_fill={} fill_texels={} failures={}",
        summary.charts,
        summary.charts_with_fill,
        summary.fill_texels,
        summary.failures.len()
    );
    report.inpaint = Some(summary);
    dump::write_mesh(out, MESH, &mesh)?;
    write_json(&out.join(SEGMENTATION), &art)?;
    write_json(&out.join(CHARTS), &charts)?;
    dump::write_rasters(out, &outcome.rasters)?;
    Ok(report)
}

fn pack_stage(
    dir: &Path,
    mut report: PipelineReport,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineReport, PipelineError> {
    let mesh = read_mesh(dir, &config.classes)?;
    let charts: Vec<UvChart> = read_json(&dir.join(CHARTS))?;
    let rasters = read_rasters(dir, &charts, config.seed)?;
    let fail = |e: crate::atlas::AtlasError| PipelineError::stage(Stage::Pack, e);
    let layout: AtlasLayout = pack_charts(&charts, &config.pack).map_err(fail)?;
    let pages = compose_atlas(&layout, &rasters).map_err(fail)?;
    let occ = occupancy(&layout).map_err(fail)?;
    let result = reproject(
        &mesh,
        &charts,
        &layout,
        pages.into_iter().map(Arc::new).collect(),
    )
    .map_err(fail)?;
    let summary = PackSummary {
        pages: layout.pages.iter().map(|&(w, h)| [w, h]).collect(),
        occupancy: occ,
        charts: layout.placements.len(),
    };
    log::info!(
        "stage=pack pages={} occupancy={:.4}",
        summary.pages.len(),
        summary.occupancy
    );
    report.pack = Some(summary);
    report.output = Some(MeshStats::of(&result, &config.classes));
    write_json(&out.join(LAYOUT), &layout)?;
    dump::write_mesh(out, OUTPUT_MESH, &result)?;
    Ok(report)
}
