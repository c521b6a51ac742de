//! Raster and digest primitives shared by every stage.

use std::fmt;
use std::io::Cursor;
use std::sync::Arc;

use image::{imageops, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// Canonical analysis resolution: longest side after resizing.
pub const CANONICAL_MAX_DIM: u32 = 512;

/// SHA-256 content digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 12 hex characters, for log lines and generated labels.
    pub fn short(&self) -> String {
        self.hex()[..12].to_string()
    }

    pub fn parse(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

impl From<Digest> for String {
    fn from(d: Digest) -> String {
        d.hex()
    }
}

impl TryFrom<String> for Digest {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        Digest::parse(&s).ok_or_else(|| format!("invalid digest `{s}`"))
    }
}

/// Immutable 8-bit RGB image. Cloning shares the pixel buffer.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Arc<[u8]>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Raster({}x{})", self.width, self.height)
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "raster of {width}x{height} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: data.into(),
        })
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let data: Vec<u8> = std::iter::repeat_n(rgb, width as usize * height as usize)
            .flatten()
            .collect();
        Self::new(width, height, data).expect("solid raster dimensions")
    }

    /// Build from a per-pixel function.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data).expect("raster dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Digest over the dimensions (little-endian u32 width, height) followed by the pixel bytes.
    pub fn digest(&self) -> Digest {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        hasher.update(&self.data);
        Digest(hasher.finalize().into())
    }

    /// BT.601 luma per pixel, row-major, in [0, 255].
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }

    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> Result<Raster> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {width}x{height}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(width as usize * height as usize * 3);
        let stride = self.width as usize * 3;
        for row in y..y + height {
            let start = row as usize * stride + x as usize * 3;
            out.extend_from_slice(&self.data[start..start + width as usize * 3]);
        }
        Raster::new(width, height, out)
    }

    /// Central `fraction` x `fraction` region (at least one pixel per side).
    pub fn center_crop(&self, fraction: f64) -> Raster {
        let cw = ((self.width as f64 * fraction).floor() as u32).clamp(1, self.width);
        let ch = ((self.height as f64 * fraction).floor() as u32).clamp(1, self.height);
        let x0 = (self.width - cw) / 2;
        let y0 = (self.height - ch) / 2;
        self.crop(x0, y0, cw, ch).expect("center crop inside raster")
    }

    /// Resample to exact dimensions with a triangle filter.
    pub fn resize(&self, width: u32, height: u32) -> Raster {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let img = self.to_image();
        let out = imageops::resize(&img, width.max(1), height.max(1), imageops::FilterType::Triangle);
        Raster::new(out.width(), out.height(), out.into_raw()).expect("resized raster")
    }

    /// Downscale so the longest side is at most `max_dim`; smaller rasters are returned as-is.
    pub fn fit_within(&self, max_dim: u32) -> Raster {
        let longest = self.width.max(self.height);
        if longest <= max_dim {
            return self.clone();
        }
        let scale = max_dim as f64 / longest as f64;
        let w = ((self.width as f64 * scale).round() as u32).max(1);
        let h = ((self.height as f64 * scale).round() as u32).max(1);
        self.resize(w, h)
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data.to_vec()).expect("raster buffer size")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_image()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
        Ok(buf.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Raster> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| Error::InvalidArgument(format!("png decode: {e}")))?
            .to_rgb8();
        Raster::new(img.width(), img.height(), img.into_raw())
    }
}

/// Single-channel real-valued map (depth estimates).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl ScalarMap {
    pub fn median(&self) -> f64 {
        median(&self.values)
    }
}

/// Median of a non-empty slice; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
