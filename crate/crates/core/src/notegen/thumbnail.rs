//! Step thumbnails by text-image similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warnings};
use crate::ingest::FrameRecord;
use crate::providers::{cosine, Providers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thumbnail {
    pub frame_index: usize,
    pub timestamp: f64,
    pub similarity: f64,
    /// Asset name, filled when the image is stored.
    #[serde(default)]
    pub asset: String,
    /// Chosen as the frame nearest the step start rather than by similarity.
    #[serde(default)]
    pub fallback: bool,
}

/// Sampled frame nearest `t`, earliest on ties.
pub fn nearest_frame(frames: &[FrameRecord], t: f64) -> Option<&FrameRecord> {
    frames.iter().min_by(|a, b| {
        (a.timestamp - t)
            .abs()
            .total_cmp(&(b.timestamp - t).abs())
            .then(a.timestamp.total_cmp(&b.timestamp))
    })
}

fn best(providers: &Providers, concise: &str, candidates: &[&FrameRecord]) -> Result<(usize, f64)> {
    let text = providers.joint_embed_text(concise)?;
    let mut top: Option<(usize, f64, f64)> = None;
    for (i, f) in candidates.iter().enumerate() {
        let s = cosine(&text, &providers.joint_embed_image(f)?)?;
        let better = match top {
            None => true,
            Some((_, bs, bt)) => s > bs || (s == bs && f.timestamp < bt),
        };
        if better {
            top = Some((i, s, f.timestamp));
        }
    }
    top.map(|(i, s, _)| (i, s)).ok_or_else(|| Error::EmptyContent("no thumbnail candidates".into()))
}

/// Argmax of text-image cosine over keyframes inside `[t_s, t_e]`.
pub fn retrieve_thumbnail(
    providers: &Providers,
    t_s: f64,
    t_e: f64,
    concise: &str,
    keyframes: &[&FrameRecord],
    all_frames: &[FrameRecord],
) -> Result<(Thumbnail, Warnings)> {
    let mut warnings = Warnings::new();
    let candidates: Vec<&FrameRecord> = keyframes
        .iter()
        .copied()
        .filter(|f| f.timestamp >= t_s && f.timestamp <= t_e)
        .collect();
    if !candidates.is_empty() {
        match best(providers, concise, &candidates) {
            Ok((i, similarity)) => {
                return Ok((
                    Thumbnail {
                        frame_index: candidates[i].index,
                        timestamp: candidates[i].timestamp,
                        similarity,
                        asset: String::new(),
                        fallback: false,
                    },
                    warnings,
                ))
            }
            Err(e) => warnings.push(format!("thumbnail for [{t_s:.3}, {t_e:.3}] fell back: {e}")),
        }
    }
    let f = nearest_frame(all_frames, t_s).ok_or_else(|| Error::EmptyContent("no sampled frames".into()))?;
    Ok((
        Thumbnail {
            frame_index: f.index,
            timestamp: f.timestamp,
            similarity: 0.0,
            asset: String::new(),
            fallback: true,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Raster;
    use crate::providers::mock::MockTables;
    use crate::providers::Modality;

    fn frames() -> Vec<FrameRecord> {
        (0..3)
            .map(|i| FrameRecord::new(i, i as f64 + 1.0, Raster::solid(8, 8, [i as u8 * 40, 0, 0])))
            .collect()
    }

    /// Unit text vector e0; image i gets cosine `sims[i]` with it.
    fn forced(frames: &[FrameRecord], sims: &[f64]) -> Providers {
        let mut t = MockTables {
            dim: Some(4),
            ..MockTables::default()
        };
        t.set_embedding(Modality::JointText, "Clamp it.", vec![1.0, 0.0, 0.0, 0.0]);
        for (f, s) in frames.iter().zip(sims) {
            t.set_embedding(Modality::JointImage, f.content_digest.hex(), vec![*s, (1.0 - s * s).sqrt(), 0.0, 0.0]);
        }
        Providers::mock(t, 3)
    }

    #[test]
    fn argmax_over_forced_table() {
        let fs = frames();
        let p = forced(&fs, &[0.2, 0.9, 0.4]);
        let refs: Vec<&FrameRecord> = fs.iter().collect();
        let (t, _) = retrieve_thumbnail(&p, 0.0, 5.0, "Clamp it.", &refs, &fs).unwrap();
        assert_eq!(t.frame_index, 1);
        assert!((t.similarity - 0.9).abs() < 1e-9);
        assert!(!t.fallback);
    }

    #[test]
    fn ties_go_to_the_earlier_frame() {
        let fs = frames();
        let p = forced(&fs, &[0.5, 0.5, 0.1]);
        let refs: Vec<&FrameRecord> = fs.iter().rev().collect();
        let (t, _) = retrieve_thumbnail(&p, 0.0, 5.0, "Clamp it.", &refs, &fs).unwrap();
        assert_eq!(t.frame_index, 0);
    }

    #[test]
    fn singleton_and_fallback() {
        let fs = frames();
        let p = forced(&fs, &[0.2, 0.9, 0.4]);
        let (t, _) = retrieve_thumbnail(&p, 2.5, 3.5, "Clamp it.", &[&fs[2]], &fs).unwrap();
        assert_eq!(t.frame_index, 2);
        let (t, _) = retrieve_thumbnail(&p, 1.8, 1.9, "Clamp it.", &[&fs[2]], &fs).unwrap();
        assert!(t.fallback);
        assert_eq!(t.frame_index, 1);
    }
}
