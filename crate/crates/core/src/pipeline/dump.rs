//! Stage intermediates on disk.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{PipelineError, PipelineReport, Stage, SCHEMA_VERSION};
use crate::inpainting::{ChartRaster, Coverage};
use crate::mesh::{load_mesh, save_mesh, ClassMap, LabeledMesh, TextureImage};
use crate::reconstruction::RemovalPlan;
use crate::segmentation::{ObjectBox, Segmentation};

pub const MANIFEST: &str = "manifest.json";
pub const MESH: &str = "mesh.obj";
pub const SEGMENTATION: &str = "segmentation.json";
pub const CHARTS: &str = "charts.json";
pub const CHARTS_SVG: &str = "charts.svg";
pub const RASTERS: &str = "rasters";
pub const LAYOUT: &str = "layout.json";
pub const OUTPUT_MESH: &str = "output.obj";
pub const REPORT: &str = "report.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub stage: Stage,
    /// Report accumulated up to and including `stage`.
    pub report: PipelineReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentArtifacts {
    pub segmentation: Segmentation,
    pub boxes: Vec<ObjectBox>,
    pub plan: RemovalPlan,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingIntermediate(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Reads a dump's manifest and checks its schema version and stage.
pub fn read_manifest(dir: &Path, expected: Stage) -> Result<Manifest, PipelineError> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(PipelineError::MissingIntermediate(path));
    }
    let value: serde_json::Value = read_json(&path)?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| io_err(&path, "no schema_version"))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(PipelineError::SchemaMismatch {
            what: path.display().to_string(),
            found: found as u32,
            expected: SCHEMA_VERSION,
        });
    }
    let m: Manifest = serde_json::from_value(value).map_err(|e| io_err(&path, e))?;
    if m.stage != expected {
        return Err(PipelineError::WrongIntermediate {
            expected,
            found: m.stage,
        });
    }
    let mut m = m;
    let timings = dir.join(TIMINGS);
    if timings.exists() {
        m.report.timings = read_json(&timings)?;
    }
    Ok(m)
}

/// Writes `report.json` without timings, so it is reproducible byte for
/// byte, and the timings to `timings.json`.
pub fn write_report(dir: &Path, report: &PipelineReport) -> Result<(), PipelineError> {
    write_json(&dir.join(REPORT), &report.without_timings())?;
    write_json(&dir.join(TIMINGS), &report.timings)
}

pub fn write_manifest(
    dir: &Path,
    stage: Stage,
    report: &PipelineReport,
) -> Result<(), PipelineError> {
    write_json(
        &dir.join(MANIFEST),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            stage,
            report: report.without_timings(),
        },
    )?;
    write_json(&dir.join(TIMINGS), &report.timings)
}

pub fn write_mesh(dir: &Path, name: &str, mesh: &LabeledMesh) -> Result<(), PipelineError> {
    let path = dir.join(name);
    save_mesh(mesh, &path).map_err(|e| io_err(&path, e))
}

pub fn read_mesh(dir: &Path, classes: &ClassMap) -> Result<LabeledMesh, PipelineError> {
    let path = dir.join(MESH);
    if !path.exists() {
        return Err(PipelineError::MissingIntermediate(path));
    }
    let labels = crate::mesh::sidecar_path(&path);
    load_mesh(&path, Some(&labels), classes).map_err(|e| io_err(&path, e))
}

fn raster_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    let d = dir.join(RASTERS);
    (
        d.join(format!("chart_{i:05}.png")),
        d.join(format!("chart_{i:05}_coverage.png")),
    )
}

const COVERAGE_LEVELS: [(Coverage, u8); 3] = [
    (Coverage::Outside, 0),
    (Coverage::Reference, 128),
    (Coverage::Fill, 255),
];

/// Color and coverage PNGs per raster, numbered in chart order.
pub fn write_rasters(dir: &Path, rasters: &[ChartRaster]) -> Result<(), PipelineError> {
    let d = dir.join(RASTERS);
    std::fs::create_dir_all(&d).map_err(|e| io_err(&d, e))?;
    for (i, r) in rasters.iter().enumerate() {
        let (color, cov) = raster_paths(dir, i);
        r.to_image()
            .save_png(&color)
            .map_err(|e| io_err(&color, e))?;
        let bytes: Vec<u8> = r
            .coverage
            .iter()
            .map(|c| {
                COVERAGE_LEVELS
                    .iter()
                    .find(|(k, _)| k == c)
                    .map(|x| x.1)
                    .unwrap_or(0)
            })
            .collect();
        image::save_buffer_with_format(
            &cov,
            &bytes,
            r.width,
            r.height,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| io_err(&cov, e))?;
    }
    Ok(())
}

/// Reads rasters back; identity and seed come from the matching charts.
pub fn read_rasters(
    dir: &Path,
    charts: &[crate::uv_mapping::UvChart],
    seed: u64,
) -> Result<Vec<ChartRaster>, PipelineError> {
    let mut out = Vec::with_capacity(charts.len());
    for (i, c) in charts.iter().enumerate() {
        let (color, cov) = raster_paths(dir, i);
        if !color.exists() {
            return Err(PipelineError::MissingIntermediate(color));
        }
        if !cov.exists() {
            return Err(PipelineError::MissingIntermediate(cov));
        }
        let img = TextureImage::load(&color).map_err(|e| io_err(&color, e))?;
        let mask = image::open(&cov).map_err(|e| io_err(&cov, e))?.into_luma8();
        if mask.dimensions() != (img.width, img.height) {
            return Err(io_err(&cov, "coverage size differs from color"));
        }
        let mut r = ChartRaster::new(c.label(), c.component, img.width, img.height);
        for y in 0..img.height {
            for x in 0..img.width {
                let k = r.index(x, y);
                r.color[k] = img.rgb(x, y);
                let v = mask.get_pixel(x, y).0[0];
                r.coverage[k] = COVERAGE_LEVELS
                    .iter()
                    .find(|(_, b)| *b == v)
                    .map(|x| x.0)
                    .ok_or_else(|| io_err(&cov, format!("coverage value {v}")))?;
            }
        }
        r.seed = crate::inpainting::chart_seed(seed, &r);
        out.push(r);
    }
    Ok(out)
}
