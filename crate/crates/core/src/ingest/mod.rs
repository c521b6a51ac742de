//! Video ingest: uniform frame sampling, audio extraction, sentence transcripts.

pub mod container;
pub mod decode;
pub mod transcript;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use decode::{open, MediaInfo, VideoDecoder};
pub use transcript::{normalize_segments, transcribe, RawSegment, TranscriptSegment};

use crate::error::{Error, Result};
use crate::media::{Digest, Raster, CANONICAL_MAX_DIM};
use crate::par::{self, Exec};

/// Sampling rate used when none is configured, in frames per second.
pub const DEFAULT_SAMPLE_RATE: f64 = 1.0;

/// A sampled frame at the canonical analysis resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub image: Raster,
    pub content_digest: Digest,
}

impl FrameRecord {
    pub fn new(index: usize, timestamp: f64, image: Raster) -> Self {
        let content_digest = image.digest();
        Self {
            index,
            timestamp,
            image,
            content_digest,
        }
    }
}

/// Serializable view of a frame without pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub index: usize,
    pub timestamp: f64,
    pub digest: Digest,
}

impl From<&FrameRecord> for FrameMeta {
    fn from(f: &FrameRecord) -> Self {
        Self {
            index: f.index,
            timestamp: f.timestamp,
            digest: f.content_digest,
        }
    }
}

/// Mono 16-bit PCM track.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub sample_rate: u32,
    pub samples: Arc<[i16]>,
    pub source_uri: String,
}

impl AudioTrack {
    pub fn duration(&self) -> f64 {
        if self.sample_rate == 0 {
            0.0
        } else {
            self.samples.len() as f64 / self.sample_rate as f64
        }
    }

    /// Peak below -60 dBFS.
    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|s| s.unsigned_abs() < 33)
    }

    /// RIFF/WAVE encoding (PCM s16le mono) for remote transcription.
    pub fn to_wav(&self) -> Vec<u8> {
        let data_len = self.samples.len() as u32 * 2;
        let mut out = Vec::with_capacity(44 + data_len as usize);
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.sample_rate * 2).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in self.samples.iter() {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}

/// Sampling grid `k / rate` for `k = 0..=floor(duration * rate)`.
pub fn sample_times(duration: f64, rate: f64) -> Vec<f64> {
    let last = (duration * rate + 1e-9).floor() as usize;
    (0..=last).map(|k| k as f64 / rate).collect()
}

/// Sample frames on the uniform grid, each taken from the nearest decoded frame and
/// normalized to the canonical resolution.
pub fn sample_frames(source: &mut dyn VideoDecoder, rate: f64) -> Result<Vec<FrameRecord>> {
    sample_frames_with(source, rate, Exec::available())
}

pub fn sample_frames_with(
    source: &mut dyn VideoDecoder,
    rate: f64,
    exec: Exec,
) -> Result<Vec<FrameRecord>> {
    let info = source.info().clone();
    if info.duration <= 0.0 || source.frame_count() == 0 {
        return Err(Error::EmptyVideo);
    }
    if !(rate.is_finite() && rate > 0.0) || rate > info.native_fps + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "sampling rate {rate} must be in (0, {}]",
            info.native_fps
        )));
    }
    let times = sample_times(info.duration, rate);
    let last = source.frame_count() - 1;
    let native: Vec<usize> = times
        .iter()
        .map(|t| ((t * info.native_fps).round() as usize).min(last))
        .collect();
    let rasters = source.frames(&native)?;
    if rasters.len() != native.len() {
        return Err(Error::UnreadableSource(format!(
            "decoder returned {} of {} frames",
            rasters.len(),
            native.len()
        )));
    }
    let jobs: Vec<(usize, f64, Raster)> = times
        .into_iter()
        .zip(rasters)
        .enumerate()
        .map(|(i, (t, r))| (i, t, r))
        .collect();
    Ok(par::map(exec, &jobs, |(i, t, r)| {
        FrameRecord::new(*i, *t, r.fit_within(CANONICAL_MAX_DIM))
    }))
}

/// Mono audio for transcription. Absent or zero-length streams are `NO_AUDIO_TRACK`.
pub fn extract_audio(source: &mut dyn VideoDecoder) -> Result<AudioTrack> {
    match source.audio()? {
        Some(track) if !track.samples.is_empty() && track.sample_rate > 0 => Ok(track),
        _ => Err(Error::NoAudioTrack),
    }
}
