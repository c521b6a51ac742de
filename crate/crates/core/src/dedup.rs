//! Keyframe selection by dual-embedding similarity filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameRecord;
use crate::par::{self, Exec};
pub use crate::providers::cosine;
use crate::providers::{EmbeddingVector, Modality, Providers};

pub const DEFAULT_SEMANTIC_THRESHOLD: f64 = 0.92;
pub const DEFAULT_VISUAL_THRESHOLD: f64 = 0.85;

/// How each frame is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// Against the immediately preceding frame, kept or not.
    #[default]
    Consecutive,
    /// Against the most recently kept frame; catches slow drift.
    LastKept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSet {
    pub kept_indices: Vec<usize>,
    pub modality: Modality,
    pub threshold: f64,
    /// Length of the sequence the set was built over.
    pub source_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub indices: Vec<usize>,
}

impl KeyframeSet {
    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

pub fn filter_by_similarity(embeddings: &[EmbeddingVector], threshold: f64) -> Result<FilteredSet> {
    filter_with_mode(embeddings, threshold, CompareMode::Consecutive)
}

pub fn filter_with_mode(embeddings: &[EmbeddingVector], threshold: f64, mode: CompareMode) -> Result<FilteredSet> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot filter an empty sequence".into()))?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1]")));
    }
    let mut kept = vec![0];
    let mut anchor = 0;
    for i in 1..embeddings.len() {
        let reference = match mode {
            CompareMode::Consecutive => i - 1,
            CompareMode::LastKept => anchor,
        };
        if cosine(&embeddings[reference], &embeddings[i])? < threshold {
            kept.push(i);
            anchor = i;
        }
    }
    Ok(FilteredSet {
        kept_indices: kept,
        modality: first.modality,
        threshold,
        source_len: embeddings.len(),
    })
}

pub fn intersect_keyframes(sem: &FilteredSet, vis: &FilteredSet) -> Result<KeyframeSet> {
    if sem.source_len != vis.source_len {
        return Err(Error::MismatchedSource {
            left: sem.source_len,
            right: vis.source_len,
        });
    }
    let (a, b) = (&sem.kept_indices, &vis.kept_indices);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(KeyframeSet { indices: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub semantic_threshold: f64,
    pub visual_threshold: f64,
    pub mode: CompareMode,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            semantic_threshold: DEFAULT_SEMANTIC_THRESHOLD,
            visual_threshold: DEFAULT_VISUAL_THRESHOLD,
            mode: CompareMode::Consecutive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupResult {
    pub semantic: FilteredSet,
    pub visual: FilteredSet,
    pub keyframes: KeyframeSet,
}

/// Embed every frame with both image models, filter each sequence, intersect.
pub fn select_keyframes(
    providers: &Providers,
    frames: &[FrameRecord],
    config: &DedupConfig,
    exec: Exec,
) -> Result<DedupResult> {
    let sem = par::try_map(exec, frames, |f| providers.semantic_embed(f))?;
    let vis = par::try_map(exec, frames, |f| providers.visual_embed(f))?;
    let semantic = filter_with_mode(&sem, config.semantic_threshold, config.mode)?;
    let visual = filter_with_mode(&vis, config.visual_threshold, config.mode)?;
    let keyframes = intersect_keyframes(&semantic, &visual)?;
    debug_assert!(keyframes.indices.iter().all(|i| semantic.kept_indices.contains(i)));
    Ok(DedupResult {
        semantic,
        visual,
        keyframes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), Modality::SemanticImage).unwrap()
    }

    fn set(kept: &[usize], n: usize) -> FilteredSet {
        FilteredSet {
            kept_indices: kept.to_vec(),
            modality: Modality::SemanticImage,
            threshold: 0.9,
            source_len: n,
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&v(&[1.0, 2.0, 3.0]), &v(&[1.0, 2.0, 3.0])).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap().abs() < 1e-9);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        assert!((cosine(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap() - expected).abs() < 1e-6);
        assert!((expected - 0.974631).abs() < 1e-6);
        assert_eq!(cosine(&v(&[1.0]), &v(&[1.0, 0.0])).unwrap_err().code(), "DIM_MISMATCH");
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap_err().code(), "ZERO_VECTOR");
    }

    #[test]
    fn filter_extremes() {
        let same: Vec<_> = (0..5).map(|_| v(&[1.0, 1.0])).collect();
        assert_eq!(filter_by_similarity(&same, 0.95).unwrap().kept_indices, vec![0]);
        let ortho: Vec<_> = (0..4)
            .map(|i| {
                let mut e = vec![0.0; 4];
                e[i] = 1.0;
                v(&e)
            })
            .collect();
        assert_eq!(filter_by_similarity(&ortho, 0.95).unwrap().kept_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn modes_differ_on_slow_drift() {
        // Each step rotates a little; consecutive never fires, last-kept does once drift accumulates.
        let seq: Vec<_> = (0..10).map(|i| {
            let a = i as f64 * 0.2;
            v(&[a.cos(), a.sin()])
        }).collect();
        assert_eq!(filter_by_similarity(&seq, 0.9).unwrap().kept_indices, vec![0]);
        let last = filter_with_mode(&seq, 0.9, CompareMode::LastKept).unwrap().kept_indices;
        assert!(last.len() > 1, "{last:?}");
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(intersect_keyframes(&set(&[0, 1, 3, 5], 8), &set(&[0, 3, 5, 7], 8)).unwrap().indices, vec![0, 3, 5]);
        assert_eq!(intersect_keyframes(&set(&[0, 2], 8), &set(&[0, 2], 8)).unwrap().indices, vec![0, 2]);
        assert_eq!(intersect_keyframes(&set(&[0, 2, 4], 8), &set(&[0, 1, 3], 8)).unwrap().indices, vec![0]);
        assert_eq!(
            intersect_keyframes(&set(&[0], 8), &set(&[0], 9)).unwrap_err().code(),
            "MISMATCHED_SOURCE"
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(filter_by_similarity(&[], 0.5).is_err());
        assert!(filter_by_similarity(&[v(&[1.0])], 0.0).is_err());
        assert!(filter_by_similarity(&[v(&[1.0])], 1.5).is_err());
    }
}
