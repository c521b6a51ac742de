//! Keyframe precision/recall and chapter-boundary MRA against gold annotations.

pub mod gold;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use gold::{parse_annotations, scheme_annotations, AnnotationSet, GoldKeyframe};

pub const DEFAULT_TOLERANCE: f64 = 2.0;
/// Thresholds θ for MRA in integer percent: 50, 55, ..., 95.
pub const MRA_THRESHOLDS_PCT: [u32; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];
pub const MRA_DEFINITION: &str = "MRA = mean over theta in {0.50, 0.55, ..., 0.95} of matched / max(|gold|, |pred|), \
where gold and predicted boundaries are paired one-to-one nearest-first and a pair matches when |t_pred - t_gold| / duration < 1 - theta";
pub const PRF_DEFINITION: &str = "keyframes match one-to-one within the tolerance, same kind only, gold in ascending time taking the nearest \
unmatched prediction; P = matches / pred, R = matches / gold, 1.0 when both counts are zero; aggregates are macro averages over videos";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeMatch {
    pub gold: usize,
    pub pred: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<KeyframeMatch>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Greedy one-to-one matching: gold in ascending time takes the nearest unused same-kind prediction within `tolerance`.
pub fn match_keyframes(pred: &[GoldKeyframe], gold: &[GoldKeyframe], tolerance: f64) -> Matching {
    let tolerance = tolerance.max(0.0);
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.sort_by(|&a, &b| gold[a].timestamp.total_cmp(&gold[b].timestamp).then(a.cmp(&b)));
    let mut used = vec![false; pred.len()];
    let mut out = Matching::default();
    for gi in order {
        let g = &gold[gi];
        let best = pred
            .iter()
            .enumerate()
            .filter(|(pi, p)| !used[*pi] && p.kind == g.kind && (p.timestamp - g.timestamp).abs() <= tolerance)
            .min_by(|(ai, a), (bi, b)| {
                (a.timestamp - g.timestamp)
                    .abs()
                    .total_cmp(&(b.timestamp - g.timestamp).abs())
                    .then(a.timestamp.total_cmp(&b.timestamp))
                    .then(ai.cmp(bi))
            })
            .map(|(pi, _)| pi);
        match best {
            Some(pi) => {
                used[pi] = true;
                out.pairs.push(KeyframeMatch { gold: gi, pred: pi });
            }
            None => out.unmatched_gold.push(gi),
        }
    }
    out.unmatched_gold.sort();
    out.unmatched_pred = (0..pred.len()).filter(|i| !used[*i]).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn ratio(num: usize, den: usize, other: usize) -> f64 {
    match (den, other) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => num as f64 / den as f64,
    }
}

pub fn compute_prf(matches: usize, pred: usize, gold: usize) -> Prf {
    debug_assert!(matches <= pred && matches <= gold);
    let precision = ratio(matches, pred, gold);
    let recall = ratio(matches, gold, pred);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf { precision, recall, f1 }
}

/// Ascending `(gold_index, pred_index, |error|)` pairs, nearest pairs claimed first.
pub fn pair_boundaries(pred: &[f64], gold: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(pred.len() * gold.len());
    for (gi, g) in gold.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            all.push(((p - g).abs(), gi, pi));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut gu, mut pu) = (vec![false; gold.len()], vec![false; pred.len()]);
    let mut out = Vec::new();
    for (d, gi, pi) in all {
        if !gu[gi] && !pu[pi] {
            gu[gi] = true;
            pu[pi] = true;
            out.push((gi, pi, d));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

pub fn compute_mra(pred: &[f64], gold: &[f64], duration: f64) -> f64 {
    let denom = gold.len().max(pred.len());
    if denom == 0 {
        return 1.0;
    }
    if !(duration > 0.0) {
        return 0.0;
    }
    let pairs = pair_boundaries(pred, gold);
    let total: f64 = MRA_THRESHOLDS_PCT
        .iter()
        .map(|&pct| {
            let limit = (100 - pct) as f64 / 100.0;
            let hits = pairs.iter().filter(|(_, _, d)| d / duration < limit).count();
            hits as f64 / denom as f64
        })
        .sum();
    total / MRA_THRESHOLDS_PCT.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub video: String,
    pub per_kind: BTreeMap<String, Prf>,
    pub keyframes: Prf,
    pub matches: usize,
    pub pred_count: usize,
    pub gold_count: usize,
    pub mra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub definitions: BTreeMap<String, String>,
    pub tolerance: f64,
    pub videos: Vec<VideoReport>,
    /// Macro averages over videos.
    pub per_kind: BTreeMap<String, Prf>,
    pub keyframes: Prf,
    pub mra: Option<f64>,
}

pub fn evaluate_video(pred: &AnnotationSet, gold: &AnnotationSet, tolerance: f64) -> VideoReport {
    let m = match_keyframes(&pred.keyframes, &gold.keyframes, tolerance);
    let mut kinds: Vec<&str> = gold.keyframes.iter().chain(&pred.keyframes).map(|k| k.kind.as_str()).collect();
    kinds.sort();
    kinds.dedup();
    let per_kind = kinds
        .into_iter()
        .map(|kind| {
            let hits = m.pairs.iter().filter(|p| gold.keyframes[p.gold].kind == kind).count();
            let np = pred.keyframes.iter().filter(|k| k.kind == kind).count();
            let ng = gold.keyframes.iter().filter(|k| k.kind == kind).count();
            (kind.to_string(), compute_prf(hits, np, ng))
        })
        .collect();
    let duration = gold.duration.or(pred.duration);
    let has_boundaries = !gold.boundaries.is_empty() || !pred.boundaries.is_empty();
    VideoReport {
        video: gold.video.clone(),
        per_kind,
        keyframes: compute_prf(m.pairs.len(), pred.keyframes.len(), gold.keyframes.len()),
        matches: m.pairs.len(),
        pred_count: pred.keyframes.len(),
        gold_count: gold.keyframes.len(),
        mra: match duration {
            Some(d) if has_boundaries => Some(compute_mra(&pred.boundaries, &gold.boundaries, d)),
            _ => None,
        },
    }
}

fn mean_prf<'a>(items: impl Iterator<Item = &'a Prf>) -> Prf {
    let (mut n, mut acc) = (0.0, Prf::default());
    for p in items {
        n += 1.0;
        acc.precision += p.precision;
        acc.recall += p.recall;
        acc.f1 += p.f1;
    }
    if n == 0.0 {
        return acc;
    }
    Prf {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    }
}

/// Macro report over videos paired by id.
pub fn evaluate(pred: &[AnnotationSet], gold: &[AnnotationSet], tolerance: f64) -> MetricReport {
    let empty = |video: &str| AnnotationSet {
        video: video.to_string(),
        ..Default::default()
    };
    let single = pred.len() == 1 && gold.len() == 1;
    let videos: Vec<VideoReport> = gold
        .iter()
        .map(|g| {
            let p = if single {
                pred[0].clone()
            } else {
                pred.iter().find(|p| p.video == g.video).cloned().unwrap_or_else(|| empty(&g.video))
            };
            evaluate_video(&p, g, tolerance)
        })
        .collect();
    let mut kinds: Vec<&String> = videos.iter().flat_map(|v| v.per_kind.keys()).collect();
    kinds.sort();
    kinds.dedup();
    let per_kind = kinds
        .into_iter()
        .map(|k| (k.clone(), mean_prf(videos.iter().filter_map(|v| v.per_kind.get(k)))))
        .collect();
    let mras: Vec<f64> = videos.iter().filter_map(|v| v.mra).collect();
    MetricReport {
        definitions: BTreeMap::from([("mra".to_string(), MRA_DEFINITION.to_string()), ("prf".to_string(), PRF_DEFINITION.to_string())]),
        tolerance,
        keyframes: mean_prf(videos.iter().map(|v| &v.keyframes)),
        per_kind,
        mra: (!mras.is_empty()).then(|| mras.iter().sum::<f64>() / mras.len() as f64),
        videos,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kf(kind: &str, t: f64) -> GoldKeyframe {
        GoldKeyframe {
            kind: kind.into(),
            timestamp: t,
        }
    }

    #[test]
    fn nearest_within_tolerance() {
        let m = match_keyframes(&[kf("A", 10.8), kf("A", 11.9)], &[kf("A", 10.0)], 1.0);
        assert_eq!(m.pairs, vec![KeyframeMatch { gold: 0, pred: 0 }]);
        assert_eq!(m.unmatched_pred, vec![1]);
        let m = match_keyframes(&[], &[kf("A", 1.0)], 2.0);
        assert!(m.pairs.is_empty());
        let m = match_keyframes(&[kf("B", 1.0)], &[kf("A", 1.0)], 2.0);
        assert!(m.pairs.is_empty(), "kinds never cross");
    }

    #[test]
    fn prf_examples() {
        let p = compute_prf(9, 10, 10);
        assert!((p.precision - 0.9).abs() < 1e-12 && (p.recall - 0.9).abs() < 1e-12 && (p.f1 - 0.9).abs() < 1e-12);
        assert_eq!(compute_prf(0, 0, 0), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(compute_prf(0, 0, 3), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(compute_prf(0, 3, 0), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
    }

    #[test]
    fn mra_examples() {
        assert_eq!(compute_mra(&[30.0, 60.0], &[30.0, 60.0], 120.0), 1.0);
        assert_eq!(compute_mra(&[], &[30.0, 60.0], 120.0), 0.0);
        assert!((compute_mra(&[33.0, 60.0], &[30.0, 60.0], 120.0) - 1.0).abs() < 1e-12);
        assert!((compute_mra(&[45.0, 60.0], &[30.0, 60.0], 120.0) - 0.9).abs() < 1e-12);
    }
}
