//! External inpainting command protocol.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChartRaster, Coverage, InpaintError};
use crate::mesh::TextureImage;

/// Environment variable naming the parent directory for hook temp files.
pub const TMPDIR_ENV: &str = "DEFURNISH_TMPDIR";

/// Shell command run once per chart. `{texture}`, `{mask}` and `{output}`
/// are replaced with quoted PNG paths; the mask is 8-bit gray with 255 on
/// texels to fill.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalHook {
    pub command: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    300.0
}

impl ExternalHook {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalHook {
            command: command.into(),
            timeout_secs: default_timeout(),
            working_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), InpaintError> {
        for p in ["{texture}", "{mask}", "{output}"] {
            if !self.command.contains(p) {
                return Err(InpaintError::InvalidParams(format!(
                    "hook command lacks {p}"
                )));
            }
        }
        if !(self.timeout_secs > 0.0) {
            return Err(InpaintError::InvalidParams(format!(
                "hook timeout {}",
                self.timeout_secs
            )));
        }
        Ok(())
    }
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

fn io(e: impl std::fmt::Display) -> InpaintError {
    InpaintError::Io(e.to_string())
}

/// Runs the hook on one raster. Only Fill texels are taken from the hook's
/// output; everything else is copied from the input.
pub fn inpaint_external(
    raster: &ChartRaster,
    hook: &ExternalHook,
) -> Result<ChartRaster, InpaintError> {
    hook.validate()?;
    let parent = std::env::var_os(TMPDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&parent).map_err(io)?;
    let dir = tempfile::Builder::new()
        .prefix("defurnish-hook-")
        .tempdir_in(&parent)
        .map_err(io)?;
    let texture = dir.path().join("texture.png");
    let mask = dir.path().join("mask.png");
    let output = dir.path().join("output.png");
    raster.to_image().save_png(&texture).map_err(io)?;
    image::save_buffer_with_format(
        &mask,
        &raster.mask_bytes(),
        raster.width,
        raster.height,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(io)?;

    let cmd = hook
        .command
        .replace("{texture}", &quote(&texture))
        .replace("{mask}", &quote(&mask))
        .replace("{output}", &quote(&output));
    let stderr_path = dir.path().join("stderr.txt");
    let stderr_file = std::fs::File::create(&stderr_path).map_err(io)?;
    let mut command = Command::new("sh");
    command
        .arg("-c")
        .arg(&cmd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::from(stderr_file));
    if let Some(wd) = &hook.working_dir {
        command.current_dir(wd);
    }
    let mut child = command.spawn().map_err(io)?;
    let deadline = Instant::now() + Duration::from_secs_f64(hook.timeout_secs);
    let status = loop {
        if let Some(s) = child.try_wait().map_err(io)? {
            break s;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(InpaintError::HookTimeout(hook.timeout_secs));
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    if !status.success() {
        let stderr = std::fs::read_to_string(&stderr_path).unwrap_or_default();
        return Err(InpaintError::HookFailed {
            status: status.to_string(),
            stderr: stderr.trim().to_string(),
        });
    }
    let img = TextureImage::load(&output).map_err(io)?;
    if (img.width, img.height) != (raster.width, raster.height) {
        return Err(InpaintError::OutputSizeMismatch {
            expected: (raster.width, raster.height),
            got: (img.width, img.height),
        });
    }
    let mut out = raster.clone();
    for y in 0..raster.height {
        for x in 0..raster.width {
            let i = raster.index(x, y);
            if raster.coverage[i] == Coverage::Fill {
                out.color[i] = img.rgb(x, y);
            }
        }
    }
    Ok(out)
}
