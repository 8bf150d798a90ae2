use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, SCHEMA_VERSION};
use crate::atlas::PackParams;
use crate::geometry::Vec3;
use crate::inpainting::{ExternalHook, InpaintConfig, Sampling};
use crate::mesh::ClassMap;
use crate::reconstruction::ReconstructParams;
use crate::segmentation::{OrientationParams, RansacParams};
use crate::uv_mapping::FrameAxes;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemovalConfig {
    /// Meters added to every object box.
    pub padding: f64,
    /// Remove overlapping objects together; `false` removes one object at a time.
    pub grouped: bool,
}

impl Default for RemovalConfig {
    fn default() -> Self {
        RemovalConfig {
            padding: 0.02,
            grouped: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FillConfig {
    pub parallel_tol: f64,
    pub line_tol: f64,
    pub weld_tol: f64,
    /// Interior refinement spacing in meters.
    pub max_edge_length: Option<f64>,
}

impl Default for FillConfig {
    fn default() -> Self {
        let p = ReconstructParams::default();
        FillConfig {
            parallel_tol: p.parallel_tol,
            line_tol: p.line_tol,
            weld_tol: p.weld_tol,
            max_edge_length: p.max_edge_length,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UvConfig {
    /// Texels per meter.
    pub texel_density: f64,
    pub max_chart_texels: u32,
    /// Lookup used when copying source texture into chart rasters.
    pub sampling: Sampling,
}

impl Default for UvConfig {
    fn default() -> Self {
        UvConfig {
            texel_density: 256.0,
            max_chart_texels: 8192,
            sampling: Sampling::default(),
        }
    }
}

/// Everything a run depends on. Every field has a default, so an empty
/// file is a valid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub up_axis: Vec3,
    pub forward_axis: Vec3,
    /// Degrees from the up axis within which a plane counts as horizontal
    /// (and from perpendicular as vertical).
    pub vertical_angle: f64,
    pub ransac: RansacParams,
    pub removal: RemovalConfig,
    pub fill: FillConfig,
    pub uv: UvConfig,
    pub inpaint: InpaintConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hook: Option<ExternalHook>,
    pub pack: PackParams,
    pub classes: ClassMap,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let o = OrientationParams::default();
        let a = FrameAxes::default();
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            up_axis: a.up,
            forward_axis: a.forward,
            vertical_angle: o.vertical_angle,
            ransac: RansacParams::default(),
            removal: RemovalConfig::default(),
            fill: FillConfig::default(),
            uv: UvConfig::default(),
            inpaint: InpaintConfig::default(),
            hook: None,
            pack: PackParams::default(),
            classes: ClassMap::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::SchemaMismatch {
                what: "config".into(),
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.up_axis.norm() > 0.0) || !(self.forward_axis.norm() > 0.0) {
            return bad("up_axis and forward_axis must be non-zero".into());
        }
        if self
            .up_axis
            .normalize()
            .cross(&self.forward_axis.normalize())
            .norm()
            < 1e-6
        {
            return bad("up_axis and forward_axis must not be parallel".into());
        }
        if !(self.vertical_angle > 0.0 && self.vertical_angle < 45.0) {
            return bad(format!(
                "vertical_angle {} must be in (0, 45)",
                self.vertical_angle
            ));
        }
        if !(self.removal.padding >= 0.0) {
            return bad(format!(
                "removal.padding {} must be >= 0",
                self.removal.padding
            ));
        }
        if !(self.fill.line_tol > 0.0 && self.fill.weld_tol >= 0.0 && self.fill.parallel_tol > 0.0)
        {
            return bad("fill tolerances must be positive".into());
        }
        if let Some(l) = self.fill.max_edge_length {
            if !(l > 0.0) {
                return bad(format!("fill.max_edge_length {l} must be > 0"));
            }
        }
        if !(self.uv.texel_density > 0.0 && self.uv.texel_density.is_finite())
            || self.uv.max_chart_texels == 0
        {
            return bad("uv.texel_density and uv.max_chart_texels must be positive".into());
        }
        self.ransac
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.inpaint
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(h) = &self.hook {
            h.validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        self.pack
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.classes
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn axes(&self) -> FrameAxes {
        FrameAxes {
            up: self.up_axis.normalize(),
            forward: self.forward_axis.normalize(),
        }
    }

    pub fn orientation(&self) -> OrientationParams {
        OrientationParams {
            up_axis: self.up_axis.normalize(),
            vertical_angle: self.vertical_angle,
        }
    }

    pub fn reconstruct_params(&self) -> ReconstructParams {
        ReconstructParams {
            parallel_tol: self.fill.parallel_tol,
            line_tol: self.fill.line_tol,
            weld_tol: self.fill.weld_tol,
            max_edge_length: self.fill.max_edge_length,
            axes: self.axes(),
        }
    }
}
