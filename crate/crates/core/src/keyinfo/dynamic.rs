//! Scene cuts and the perspective-change decision rule.

use serde::{Deserialize, Serialize};

use super::histogram::{histogram_distance, ColorHistogram};
use super::keypoints::keypoint_match_ratio;
use super::ssim::ssim;
use crate::error::{Result, Warnings};
use crate::ingest::FrameRecord;
use crate::media::median;
use crate::par::{self, Exec};
use crate::providers::{cosine, Providers};

pub const DEFAULT_SCENE_THRESHOLD: f64 = 0.30;
pub const LOW_CONFIDENCE: &str = "LOW_CONFIDENCE";

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBoundary {
    pub boundary_time: f64,
    pub pre_frame: FrameRecord,
    pub post_frame: FrameRecord,
}

/// Cuts where consecutive frames' histogram distance exceeds `threshold`.
pub fn detect_scene_boundaries(frames: &[FrameRecord], threshold: f64, exec: Exec) -> Vec<SceneBoundary> {
    if frames.len() < 2 {
        return Vec::new();
    }
    let hists = par::map(exec, frames, |f| ColorHistogram::of(&f.image));
    hists
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].distance(&w[1]) > threshold)
        .map(|(i, _)| SceneBoundary {
            boundary_time: frames[i + 1].timestamp,
            pre_frame: frames[i].clone(),
            post_frame: frames[i + 1].clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub ssim_global: f64,
    pub ssim_center: f64,
    pub hist_distance: f64,
    pub keypoint_match_ratio: f64,
    pub semantic_sim: f64,
    /// `None` when the depth provider failed.
    pub depth_shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub min_semantic: f64,
    pub min_keypoint_ratio: f64,
    pub max_ssim_global: f64,
    pub max_ssim_center: f64,
    pub min_hist_distance: f64,
    pub min_depth_shift: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_semantic: 0.75,
            min_keypoint_ratio: 0.10,
            max_ssim_global: 0.60,
            max_ssim_center: 0.70,
            min_hist_distance: 0.15,
            min_depth_shift: 0.15,
        }
    }
}

impl Thresholds {
    /// Pass/fail per criterion in the order semantic, keypoints, ssim, center ssim, histogram, depth.
    pub fn criteria(&self, p: &SimilarityProfile) -> [bool; 6] {
        [
            p.semantic_sim >= self.min_semantic,
            p.keypoint_match_ratio >= self.min_keypoint_ratio,
            p.ssim_global <= self.max_ssim_global,
            p.ssim_center <= self.max_ssim_center,
            p.hist_distance >= self.min_hist_distance,
            p.depth_shift.is_none_or(|d| d >= self.min_depth_shift),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicKeyframe {
    pub boundary_time: f64,
    pub post_frame: usize,
    pub profile: SimilarityProfile,
    pub flags: Vec<String>,
}

impl DynamicKeyframe {
    pub fn low_confidence(&self) -> bool {
        self.flags.iter().any(|f| f == LOW_CONFIDENCE)
    }
}

pub fn classify_boundary(b: &SceneBoundary, profile: &SimilarityProfile, thresholds: &Thresholds) -> Option<DynamicKeyframe> {
    if !thresholds.criteria(profile).iter().all(|&c| c) {
        return None;
    }
    Some(DynamicKeyframe {
        boundary_time: b.boundary_time,
        post_frame: b.post_frame.index,
        profile: *profile,
        flags: if profile.depth_shift.is_none() { vec![LOW_CONFIDENCE.to_string()] } else { Vec::new() },
    })
}

pub fn depth_shift(providers: &Providers, a: &FrameRecord, b: &FrameRecord) -> Result<f64> {
    let da = providers.estimate_depth(a)?;
    let db = providers.estimate_depth(b)?;
    Ok((median(&da.values) - median(&db.values)).abs())
}

pub fn semantic_similarity(providers: &Providers, a: &FrameRecord, b: &FrameRecord) -> Result<f64> {
    cosine(&providers.semantic_embed(a)?, &providers.semantic_embed(b)?)
}

/// All six metrics for one boundary; a depth failure is recorded as unavailable.
pub fn profile_boundary(providers: &Providers, b: &SceneBoundary, warnings: &mut Warnings) -> Result<SimilarityProfile> {
    let (pre, post) = (&b.pre_frame, &b.post_frame);
    let semantic_sim = semantic_similarity(providers, pre, post)?;
    let same_size = pre.image.width() == post.image.width() && pre.image.height() == post.image.height();
    let (a, c) = if same_size {
        (pre.image.clone(), post.image.clone())
    } else {
        (pre.image.clone(), post.image.resize(pre.image.width(), pre.image.height()))
    };
    let depth = match depth_shift(providers, pre, post) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("dynamic: depth unavailable at {:.3}: {e}", b.boundary_time));
            None
        }
    };
    Ok(SimilarityProfile {
        ssim_global: ssim(&a, &c, false)?,
        ssim_center: ssim(&a, &c, true)?,
        hist_distance: histogram_distance(&a, &c),
        keypoint_match_ratio: keypoint_match_ratio(&a, &c),
        semantic_sim,
        depth_shift: depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConfig {
    pub scene_threshold: f64,
    pub thresholds: Thresholds,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            scene_threshold: DEFAULT_SCENE_THRESHOLD,
            thresholds: Thresholds::default(),
        }
    }
}

/// Scene boundaries over the full sampled sequence, each profiled and classified.
pub fn detect_dynamic_keyframes(
    providers: &Providers,
    frames: &[FrameRecord],
    config: &DynamicConfig,
    exec: Exec,
) -> (Vec<DynamicKeyframe>, Warnings) {
    let boundaries = detect_scene_boundaries(frames, config.scene_threshold, exec);
    let results = par::map(exec, &boundaries, |b| {
        let mut w = Warnings::new();
        let r = profile_boundary(providers, b, &mut w);
        (r, w)
    });
    let mut warnings = Warnings::new();
    let mut out = Vec::new();
    for (b, (r, w)) in boundaries.iter().zip(results) {
        warnings.extend(w);
        match r {
            Ok(profile) => out.extend(classify_boundary(b, &profile, &config.thresholds)),
            Err(e) => warnings.push(format!("dynamic: boundary at {:.3} skipped: {e}", b.boundary_time)),
        }
    }
    (out, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Raster;

    fn frames(colors: &[[u8; 3]]) -> Vec<FrameRecord> {
        colors
            .iter()
            .enumerate()
            .map(|(i, &c)| FrameRecord::new(i, i as f64, Raster::solid(16, 16, c)))
            .collect()
    }

    fn passing() -> SimilarityProfile {
        SimilarityProfile {
            ssim_global: 0.3,
            ssim_center: 0.4,
            hist_distance: 0.5,
            keypoint_match_ratio: 0.3,
            semantic_sim: 0.9,
            depth_shift: Some(0.35),
        }
    }

    fn boundary() -> SceneBoundary {
        let f = frames(&[[0; 3], [255; 3]]);
        SceneBoundary {
            boundary_time: 1.0,
            pre_frame: f[0].clone(),
            post_frame: f[1].clone(),
        }
    }

    #[test]
    fn identical_frames_have_no_cuts() {
        assert!(detect_scene_boundaries(&frames(&[[9; 3]; 6]), 0.3, Exec::Sequential).is_empty());
    }

    #[test]
    fn hard_cut_found_at_post_frame() {
        let b = detect_scene_boundaries(&frames(&[[0; 3], [0; 3], [255; 3]]), 0.3, Exec::Sequential);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].post_frame.index, 2);
        assert_eq!(b[0].boundary_time, 2.0);
        assert!(b[0].pre_frame.timestamp < b[0].boundary_time);
    }

    #[test]
    fn conjunction_rule() {
        let th = Thresholds::default();
        let k = classify_boundary(&boundary(), &passing(), &th).unwrap();
        assert_eq!(k.post_frame, 1);
        assert!(!k.low_confidence());
        let weak = SimilarityProfile {
            semantic_sim: 0.5,
            ..passing()
        };
        assert!(classify_boundary(&boundary(), &weak, &th).is_none());
        let same = SimilarityProfile {
            semantic_sim: 1.0,
            ssim_global: 1.0,
            ssim_center: 1.0,
            ..passing()
        };
        assert!(classify_boundary(&boundary(), &same, &th).is_none());
    }

    #[test]
    fn missing_depth_is_low_confidence() {
        let p = SimilarityProfile {
            depth_shift: None,
            ..passing()
        };
        let k = classify_boundary(&boundary(), &p, &Thresholds::default()).unwrap();
        assert!(k.low_confidence());
    }
}
