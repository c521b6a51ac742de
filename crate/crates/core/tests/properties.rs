use std::collections::BTreeSet;

use noteforge_core::dedup::{filter_by_similarity, intersect_keyframes};
use noteforge_core::eval::gold::GoldKeyframe;
use noteforge_core::eval::{compute_mra, compute_prf, match_keyframes};
use noteforge_core::fixture::schemes::random_scheme;
use noteforge_core::keyinfo::ssim::ssim;
use noteforge_core::media::Raster;
use noteforge_core::providers::{EmbeddingVector, Modality};
use noteforge_core::render::canonical::{parse_scheme, serialize_scheme};
use noteforge_core::structure::dag::{topological_layers, validate_dag, StructureGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn embeddings(raw: &[Vec<f64>], modality: Modality) -> Vec<EmbeddingVector> {
    raw.iter().map(|v| EmbeddingVector::new(v.clone(), modality).unwrap()).collect()
}

fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, 4), 1..30)
}

fn keyframes() -> impl Strategy<Value = Vec<GoldKeyframe>> {
    prop::collection::vec(
        (prop::sample::select(vec!["TEXT_OVERLAY", "DIAGRAM"]), 0.0f64..60.0).prop_map(|(k, t)| GoldKeyframe {
            kind: k.to_string(),
            timestamp: (t * 4.0).round() / 4.0,
        }),
        0..12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtered_sets_start_at_zero_sorted(raw in vectors(), th in 0.5f64..1.0) {
        let kept = filter_by_similarity(&embeddings(&raw, Modality::SemanticImage), th).unwrap().kept_indices;
        prop_assert_eq!(kept[0], 0);
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn higher_threshold_keeps_superset(raw in vectors(), a in 0.5f64..1.0, b in 0.5f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let e = embeddings(&raw, Modality::SemanticImage);
        let low: BTreeSet<usize> = filter_by_similarity(&e, lo).unwrap().kept_indices.into_iter().collect();
        let high: BTreeSet<usize> = filter_by_similarity(&e, hi).unwrap().kept_indices.into_iter().collect();
        prop_assert!(low.is_subset(&high));
    }

    #[test]
    fn intersection_within_both(sem in vectors(), th in 0.5f64..1.0) {
        let vis: Vec<Vec<f64>> = sem.iter().rev().cloned().collect();
        let s = filter_by_similarity(&embeddings(&sem, Modality::SemanticImage), th).unwrap();
        let v = filter_by_similarity(&embeddings(&vis, Modality::VisualImage), th).unwrap();
        let k = intersect_keyframes(&s, &v).unwrap();
        prop_assert!(k.indices.iter().all(|i| s.kept_indices.contains(i) && v.kept_indices.contains(i)));
        prop_assert!(k.indices.contains(&0));
    }

    #[test]
    fn ssim_symmetric_and_reflexive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let a = Raster::from_fn(24, 20, |_, _| [rng.random(), rng.random(), rng.random()]);
        let b = Raster::from_fn(24, 20, |x, y| [(x * 9) as u8, (y * 11) as u8, 40]);
        prop_assert!((ssim(&a, &a, false).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((ssim(&a, &b, false).unwrap() - ssim(&b, &a, false).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn random_dags_validate(n in 1usize..12, edges in prop::collection::vec((0usize..12, 0usize..12), 0..30)) {
        let nodes: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a % n, b % n);
            if a < b {
                set.insert((a.to_string(), b.to_string()));
            }
        }
        let g = StructureGraph { nodes, edges: set.into_iter().collect() };
        let bad: Vec<_> = validate_dag(&g).into_iter().filter(|v| matches!(v, noteforge_core::structure::dag::Violation::Cycle(_))).collect();
        prop_assert!(bad.is_empty());
        let layers = topological_layers(&g).unwrap();
        prop_assert_eq!(layers.iter().map(Vec::len).sum::<usize>(), n);
    }

    #[test]
    fn scheme_round_trip(seed in any::<u64>()) {
        let s = random_scheme(&mut ChaCha8Rng::seed_from_u64(seed));
        let text = serialize_scheme(&s);
        let back = parse_scheme(&text).unwrap();
        prop_assert_eq!(serialize_scheme(&back), text);
    }

    #[test]
    fn successors_induce_graph(seed in any::<u64>()) {
        let s = random_scheme(&mut ChaCha8Rng::seed_from_u64(seed));
        let g = s.chapter_graph();
        let edges: BTreeSet<(String, String)> = g.edges.iter().cloned().collect();
        let listed: BTreeSet<(String, String)> = s
            .chapters
            .iter()
            .flat_map(|c| c.successors.iter().map(move |n| (c.id.to_string(), n.to_string())))
            .collect();
        prop_assert_eq!(edges, listed);
        for (i, c) in s.chapters.iter().enumerate() {
            let g = s.step_graph(i);
            let n: usize = c.steps.iter().map(|st| st.successors.len()).sum();
            prop_assert_eq!(g.edges.len(), n);
        }
    }

    #[test]
    fn highlights_lie_inside_text(seed in any::<u64>()) {
        let s = random_scheme(&mut ChaCha8Rng::seed_from_u64(seed));
        for st in s.steps() {
            for h in &st.summary.highlights {
                let len = st.summary.text(h.target).chars().count();
                prop_assert!(h.start < h.end && h.end <= len);
            }
        }
    }

    #[test]
    fn matching_is_one_to_one(pred in keyframes(), gold in keyframes(), tol in 0.0f64..5.0) {
        let m = match_keyframes(&pred, &gold, tol);
        let ps: BTreeSet<usize> = m.pairs.iter().map(|p| p.pred).collect();
        let gs: BTreeSet<usize> = m.pairs.iter().map(|p| p.gold).collect();
        prop_assert_eq!(ps.len(), m.pairs.len());
        prop_assert_eq!(gs.len(), m.pairs.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_pred.len(), pred.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_gold.len(), gold.len());
        for p in &m.pairs {
            prop_assert_eq!(&pred[p.pred].kind, &gold[p.gold].kind);
            prop_assert!((pred[p.pred].timestamp - gold[p.gold].timestamp).abs() <= tol);
        }
        let prf = compute_prf(m.pairs.len(), pred.len(), gold.len());
        for v in [prf.precision, prf.recall, prf.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn mra_bounded_and_perfect_on_identity(gold in prop::collection::vec(0.0f64..100.0, 0..8), jitter in prop::collection::vec(-30.0f64..30.0, 8)) {
        prop_assert!((compute_mra(&gold, &gold, 100.0) - 1.0).abs() < 1e-12);
        let pred: Vec<f64> = gold.iter().zip(&jitter).map(|(g, j)| (g + j).clamp(0.0, 100.0)).collect();
        let m = compute_mra(&pred, &gold, 100.0);
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn mra_never_improves_with_larger_error(g in 10.0f64..90.0, d1 in 0.0f64..10.0, extra in 0.0f64..10.0) {
        let near = compute_mra(&[g + d1], &[g], 100.0);
        let far = compute_mra(&[g + d1 + extra], &[g], 100.0);
        prop_assert!(far <= near + 1e-12);
    }
}
