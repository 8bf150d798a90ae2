use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::inpainting::ChartIssue;
use crate::mesh::{ClassMap, LabeledMesh};
use crate::reconstruction::ReconstructionReport;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub faces: usize,
    pub structural_faces: usize,
    pub loose_faces: usize,
    pub new_faces: usize,
}

impl MeshStats {
    pub fn of(mesh: &LabeledMesh, classes: &ClassMap) -> Self {
        let loose = mesh
            .labels
            .iter()
            .filter(|l| classes.is_loose(l.class))
            .count();
        MeshStats {
            vertices: mesh.vertices.len(),
            faces: mesh.face_count(),
            structural_faces: mesh.face_count() - loose,
            loose_faces: loose,
            new_faces: mesh.is_new.iter().filter(|&&n| n).count(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub planes: usize,
    pub unplaned_groups: usize,
    pub unplaned_faces: usize,
    pub objects: usize,
    pub removal_groups: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructSummary {
    #[serde(flatten)]
    pub report: ReconstructionReport,
    /// Open hole loops left on planar elements after the stage.
    pub open_hole_loops: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistortionSummary {
    pub min_stretch: f64,
    pub max_stretch: f64,
    pub mean_stretch: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnwrapSummary {
    pub charts: usize,
    /// Charts of faces without a fitted plane.
    pub fallback_charts: usize,
    /// Charts scaled below the requested density to respect the size cap.
    pub downscaled_charts: usize,
    pub distortion: DistortionSummary,
    pub adjacency_preservation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InpaintSummary {
    pub charts: usize,
    pub charts_with_fill: usize,
    pub fill_texels: usize,
    pub backend: String,
    pub failures: Vec<ChartIssue>,
    pub warnings: Vec<ChartIssue>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PackSummary {
    pub pages: Vec<[u32; 2]>,
    pub occupancy: f64,
    pub charts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Run summary. Sections are filled as stages complete; `timings` holds
/// wall-clock seconds per stage and is the only non-deterministic field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub seed: u64,
    pub input: Option<MeshStats>,
    pub segment: Option<SegmentSummary>,
    pub reconstruct: Option<ReconstructSummary>,
    pub unwrap: Option<UnwrapSummary>,
    pub inpaint: Option<InpaintSummary>,
    pub pack: Option<PackSummary>,
    pub output: Option<MeshStats>,
    pub errors: Vec<StageFailure>,
    pub timings: BTreeMap<String, f64>,
}

impl Default for PipelineReport {
    fn default() -> Self {
        PipelineReport {
            schema_version: super::SCHEMA_VERSION,
            seed: 0,
            input: None,
            segment: None,
            reconstruct: None,
            unwrap: None,
            inpaint: None,
            pack: None,
            output: None,
            errors: Vec::new(),
            timings: BTreeMap::new(),
        }
    }
}

impl PipelineReport {
    /// The report without timings, for run-to-run comparison.
    pub fn without_timings(&self) -> PipelineReport {
        PipelineReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
