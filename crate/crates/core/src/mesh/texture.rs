use std::path::Path;

use super::MeshError;

/// Row-major 8-bit raster. Row 0 is the top of the image; texture
/// coordinates follow the OBJ convention (v = 0 at the bottom row).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextureImage {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

impl TextureImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, MeshError> {
        if width == 0 || height == 0 {
            return Err(MeshError::Invalid(format!("texture size {width}x{height}")));
        }
        if !(channels == 3 || channels == 4) {
            return Err(MeshError::Invalid(format!("{channels} texture channels")));
        }
        if pixels.len() != width as usize * height as usize * channels as usize {
            return Err(MeshError::Invalid(format!(
                "pixel buffer of {} bytes for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(TextureImage {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        TextureImage {
            width: width.max(1),
            height: height.max(1),
            channels: 3,
            pixels,
        }
    }

    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_rgb(&mut self, x: u32, y: u32, c: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Nearest-texel lookup; coordinates are clamped to the image.
    pub fn sample_nearest(&self, uv: [f64; 2]) -> [u8; 3] {
        let x = (uv[0] * self.width as f64).floor();
        let y = ((1.0 - uv[1]) * self.height as f64).floor();
        let x = x.clamp(0.0, self.width as f64 - 1.0) as u32;
        let y = y.clamp(0.0, self.height as f64 - 1.0) as u32;
        self.rgb(x, y)
    }

    /// Bilinear lookup with clamp-to-edge addressing, in 0..=255 units.
    pub fn sample_bilinear(&self, uv: [f64; 2]) -> [f64; 3] {
        let fx = uv[0] * self.width as f64 - 0.5;
        let fy = (1.0 - uv[1]) * self.height as f64 - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let maxx = self.width as i64 - 1;
        let maxy = self.height as i64 - 1;
        let cx = |x: f64| (x as i64).clamp(0, maxx) as u32;
        let cy = |y: f64| (y as i64).clamp(0, maxy) as u32;
        let (xa, xb, ya, yb) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
        let p00 = self.rgb(xa, ya);
        let p10 = self.rgb(xb, ya);
        let p01 = self.rgb(xa, yb);
        let p11 = self.rgb(xb, yb);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let (a, b, c, d) = (p00[k] as f64, p10[k] as f64, p01[k] as f64, p11[k] as f64);
            let top = a + (b - a) * tx;
            let bot = c + (d - c) * tx;
            out[k] = top + (bot - top) * ty;
        }
        out
    }

    /// Drops alpha if present.
    pub fn to_rgb(&self) -> TextureImage {
        if self.channels == 3 {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(self.width as usize * self.height as usize * 3);
        for px in self.pixels.chunks_exact(self.channels as usize) {
            pixels.extend_from_slice(&px[..3]);
        }
        TextureImage {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
        }
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        if !path.exists() {
            return Err(MeshError::NotFound(path.to_path_buf()));
        }
        let img = image::open(path).map_err(|e| MeshError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (width, height, channels, pixels) = if img.color().has_alpha() {
            let buf = img.to_rgba8();
            (buf.width(), buf.height(), 4, buf.into_raw())
        } else {
            let buf = img.to_rgb8();
            (buf.width(), buf.height(), 3, buf.into_raw())
        };
        TextureImage::new(width, height, channels, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), MeshError> {
        let color = if self.channels == 4 {
            image::ExtendedColorType::Rgba8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => MeshError::Io {
                path: path.to_path_buf(),
                source: io,
            },
            other => MeshError::Image {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }
}
