use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AudioTrack;
use crate::error::{Error, Result, Warnings};
use crate::providers::Transcriber;

/// Sentence as reported by a transcription provider, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSegment {
    pub t_s: f64,
    pub t_e: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub seg_id: usize,
    pub text: String,
    pub t_s: f64,
    pub t_e: f64,
}

/// Order, clip and clean provider segments.
///
/// Overlaps are resolved by moving each start up to the previous end; segments
/// that become empty in time or text are dropped.
pub fn normalize_segments(raw: Vec<RawSegment>) -> (Vec<TranscriptSegment>, Warnings) {
    let mut warnings = Warnings::new();
    let mut raw: Vec<RawSegment> = raw
        .into_iter()
        .filter(|s| {
            let ok = s.t_s.is_finite() && s.t_e.is_finite();
            if !ok {
                warnings.push(format!("transcript: dropped segment with non-finite span: {:?}", s.text));
            }
            ok
        })
        .collect();
    raw.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.t_e.total_cmp(&b.t_e)));
    let mut out: Vec<TranscriptSegment> = Vec::with_capacity(raw.len());
    let mut prev_end = f64::NEG_INFINITY;
    for seg in raw {
        let text = seg.text.trim();
        if text.is_empty() {
            warnings.push(format!("transcript: dropped empty segment at {:.3}s", seg.t_s));
            continue;
        }
        let mut t_s = seg.t_s.max(0.0);
        if t_s < prev_end {
            warnings.push(format!(
                "transcript: clipped overlapping segment start {:.3}s to {:.3}s",
                t_s, prev_end
            ));
            t_s = prev_end;
        }
        if seg.t_e <= t_s {
            warnings.push(format!("transcript: dropped degenerate segment {text:?}"));
            continue;
        }
        prev_end = seg.t_e;
        out.push(TranscriptSegment {
            seg_id: out.len(),
            text: text.to_string(),
            t_s,
            t_e: seg.t_e,
        });
    }
    (out, warnings)
}

/// Transcribe through `provider`; silent tracks short-circuit to an empty transcript.
pub fn transcribe(
    provider: &dyn Transcriber,
    audio: &AudioTrack,
) -> Result<(Vec<TranscriptSegment>, Warnings)> {
    if audio.is_silent() {
        return Ok((Vec::new(), Warnings::new()));
    }
    let raw = provider.transcribe(audio)?;
    Ok(normalize_segments(raw))
}

/// Parse a `t_s<TAB>t_e<TAB>text` sidecar.
pub fn parse_tsv(text: &str) -> Result<Vec<RawSegment>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(a), Some(b), Some(t)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::InvalidArgument(format!("transcript line {}: expected 3 fields", n + 1)));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("transcript line {}: bad time {s:?}", n + 1)))
        };
        out.push(RawSegment {
            t_s: parse(a)?,
            t_e: parse(b)?,
            text: t.to_string(),
        });
    }
    Ok(out)
}

pub fn to_tsv(segments: &[RawSegment]) -> String {
    let mut s = String::new();
    for seg in segments {
        let _ = writeln!(s, "{:.3}\t{:.3}\t{}", seg.t_s, seg.t_e, seg.text);
    }
    s
}

/// Segments whose start falls in `[t_s, t_e)`, or `[t_s, t_e]` when `closed`.
pub fn segments_in(segments: &[TranscriptSegment], t_s: f64, t_e: f64, closed: bool) -> Vec<TranscriptSegment> {
    segments
        .iter()
        .filter(|s| s.t_s >= t_s && (s.t_s < t_e || (closed && s.t_s <= t_e)))
        .cloned()
        .collect()
}

/// Joined text of segments overlapping `[t_s, t_e]`.
pub fn window_text(segments: &[TranscriptSegment], t_s: f64, t_e: f64) -> String {
    segments
        .iter()
        .filter(|s| s.t_e > t_s && s.t_s <= t_e)
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
