//! Animated previews for chapters and steps.

use gif::{Encoder, Frame, Repeat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameRecord;
use crate::media::Raster;

pub const MAX_GIF_FRAMES: usize = 40;
pub const GIF_FPS: f64 = 2.0;
/// Longest side of GIF frames in pixels.
pub const GIF_MAX_DIM: u32 = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GifSpec {
    /// Chapter id (`"2"`) or step id (`"2.3"`).
    pub owner: String,
    pub frame_indices: Vec<usize>,
    pub fps: f64,
    pub asset_name: String,
}

/// Uniform subsample to at most [`MAX_GIF_FRAMES`] with stride `ceil(n / 40)`.
pub fn subsample(indices: &[usize]) -> Vec<usize> {
    let stride = indices.len().div_ceil(MAX_GIF_FRAMES).max(1);
    indices.iter().step_by(stride).copied().collect()
}

/// 6x6x6 color cube.
fn palette() -> Vec<u8> {
    let mut p = Vec::with_capacity(216 * 3);
    for r in 0..6u8 {
        for g in 0..6u8 {
            for b in 0..6u8 {
                p.extend_from_slice(&[r * 51, g * 51, b * 51]);
            }
        }
    }
    p
}

fn quantize(image: &Raster) -> Vec<u8> {
    let level = |v: u8| (v as u16 * 5 + 127) / 255;
    image
        .bytes()
        .chunks_exact(3)
        .map(|px| (level(px[0]) * 36 + level(px[1]) * 6 + level(px[2])) as u8)
        .collect()
}

/// Encode frames as a looping GIF at `fps`; byte-identical for identical inputs.
pub fn encode(frames: &[&Raster], fps: f64) -> Result<Vec<u8>> {
    let first = frames.first().ok_or_else(|| Error::InvalidArgument("GIF needs at least one frame".into()))?;
    if !(fps > 0.0 && fps <= 4.0) {
        return Err(Error::InvalidArgument(format!("GIF rate {fps} outside (0, 4]")));
    }
    let base = first.fit_within(GIF_MAX_DIM);
    let (w, h) = (base.width(), base.height());
    let delay = (100.0 / fps).round() as u16;
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, w as u16, h as u16, &palette()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        enc.set_repeat(Repeat::Infinite).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for f in frames {
            let f = if f.width() == w && f.height() == h { (*f).clone() } else { f.resize(w, h) };
            let mut frame = Frame::from_indexed_pixels(w as u16, h as u16, quantize(&f), None);
            frame.delay = delay;
            enc.write_frame(&frame).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
    }
    Ok(out)
}

/// Plan and encode a preview over the frames in `[t_s, t_e)` (closed when `closed`).
pub fn assemble_gif(owner: &str, frames: &[FrameRecord], t_s: f64, t_e: f64, closed: bool) -> Result<Option<(GifSpec, Vec<u8>)>> {
    let inside: Vec<&FrameRecord> = frames
        .iter()
        .filter(|f| f.timestamp >= t_s && (f.timestamp < t_e || (closed && f.timestamp <= t_e)))
        .collect();
    if inside.is_empty() {
        return Ok(None);
    }
    let picked = subsample(&inside.iter().map(|f| f.index).collect::<Vec<_>>());
    let rasters: Vec<&Raster> = picked
        .iter()
        .map(|i| &inside.iter().find(|f| f.index == *i).expect("picked from inside").image)
        .collect();
    let bytes = encode(&rasters, GIF_FPS)?;
    Ok(Some((
        GifSpec {
            owner: owner.to_string(),
            frame_indices: picked,
            fps: GIF_FPS,
            asset_name: String::new(),
        },
        bytes,
    )))
}
