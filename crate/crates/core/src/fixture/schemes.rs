//! Hand-built and randomized note schemes.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::Result;
use crate::media::Raster;
use crate::notegen::scheme::{q3, ChapterNote, KeyFrameAnnotation, KeyFrameKind, NoteScheme, StepNote, VideoMeta, SCHEMA_VERSION};
use crate::notegen::summary::{Highlight, HighlightKind, HighlightTarget, StepSummary};
use crate::notegen::{AssetStore, Thumbnail};
use crate::structure::dag::{build_dag, Relation, StructureGraph};
use crate::structure::StepId;

fn successors<T: std::str::FromStr + Ord>(g: &StructureGraph, id: &str) -> Vec<T> {
    let mut v: Vec<T> = g.successors(id).into_iter().filter_map(|s| s.parse().ok()).collect();
    v.sort();
    v
}

fn png(store: &AssetStore, rgb: [u8; 3]) -> Result<String> {
    store.put(&Raster::solid(16, 12, rgb).encode_png()?, "png")
}

fn diamond_step(store: &AssetStore, c: u32, j: u32, t_s: f64, t_e: f64, successors: Vec<StepId>) -> Result<StepNote> {
    let shade = (c * 40 + j * 10) as u8;
    Ok(StepNote {
        id: StepId { chapter: c, step: j },
        title: format!("Step {c}.{j}"),
        t_s,
        t_e,
        summary: StepSummary {
            concise: format!("Do part {c}.{j} carefully."),
            verbose: format!("Do part {c}.{j} carefully. Use 2 cups. Keep the area dry."),
            emoji: Some("🔧".into()),
            highlights: vec![Highlight {
                target: HighlightTarget::Verbose,
                start: 27,
                end: 33,
                kind: HighlightKind::Quantity,
            }],
            flags: vec![],
        },
        thumbnail: Some(Thumbnail {
            frame_index: t_s as usize,
            timestamp: t_s,
            similarity: 0.5,
            asset: png(store, [shade, 80, 120])?,
            fallback: false,
        }),
        gif: None,
        keyframes: vec![KeyFrameAnnotation {
            kind: KeyFrameKind::TextOverlay,
            frame_index: t_s as usize + 1,
            timestamp: t_s + 1.0,
            ocr_text: format!("STEP {c}{j}"),
            explanation: String::new(),
            asset: png(store, [80, shade, 120])?,
            flags: vec![],
        }],
        successors,
    })
}

/// Edges 1 -> {2, 3, 4} -> 5 over `ids`.
fn diamond_graph(ids: &[String]) -> Result<StructureGraph> {
    let r = [
        Relation::seq(ids[0].clone(), ids[1].clone()),
        Relation::parallel([ids[1].clone(), ids[2].clone(), ids[3].clone()]),
        Relation::seq(ids[3].clone(), ids[4].clone()),
    ];
    Ok(build_dag(ids, &r)?.0)
}

/// Five chapters shaped 1 -> {2, 3, 4} -> 5. Chapters 1-4 hold two sequential steps;
/// chapter 5 holds five steps with the same diamond shape. Assets go to `store`.
pub fn diamond(store: &AssetStore) -> Result<NoteScheme> {
    let ids: Vec<String> = (1..=5).map(|i| i.to_string()).collect();
    let graph = diamond_graph(&ids)?;
    let mut chapters = Vec::new();
    for c in 1..=5u32 {
        let t0 = (c - 1) as f64 * 10.0;
        let steps = if c < 5 {
            vec![
                diamond_step(store, c, 1, t0, t0 + 5.0, vec![StepId { chapter: c, step: 2 }])?,
                diamond_step(store, c, 2, t0 + 5.0, t0 + 10.0, vec![])?,
            ]
        } else {
            let sids: Vec<String> = (1..=5).map(|j| format!("5.{j}")).collect();
            let g = diamond_graph(&sids)?;
            (1..=5u32)
                .map(|j| {
                    let t = t0 + (j - 1) as f64 * 2.0;
                    diamond_step(store, c, j, t, t + 2.0, successors(&g, &format!("5.{j}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        chapters.push(ChapterNote {
            id: c,
            title: format!("Chapter {c}"),
            summary: format!("Finish stage {c} 🛠 of the job."),
            t_s: t0,
            t_e: t0 + 10.0,
            gif: None,
            successors: successors(&graph, &c.to_string()),
            steps,
            flags: vec![],
        });
    }
    Ok(NoteScheme {
        schema_version: SCHEMA_VERSION.into(),
        video: VideoMeta {
            title: "Diamond".into(),
            duration: 50.0,
            source_uri: "fixture://diamond".into(),
        },
        chapters,
    })
}

const WORDS: &[&str] = &[
    "sand", "the", "board", "pour", "2 cups", "of", "water", "stir", "gently", "wait", "10 MIN", "café", "naïve", "\"quoted\"",
    "tab\there", "back\\slash", "日本", "rest", "care", "<tag>", "&amp", "line\nbreak",
];
const EMOJI: &[&str] = &["📝", "🔧", "🍳", "💪", "🧂", "⚠️", "👍🏽"];

fn sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..7);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("nonempty")).collect();
    let mut s = words.join(" ");
    s.push(*['.', '!', '?'].choose(rng).expect("nonempty"));
    let mut c = s.chars();
    let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
    first + c.as_str()
}

fn random_asset<R: Rng>(rng: &mut R, ext: &str) -> String {
    let bytes: [u8; 32] = rng.random();
    format!("{}.{ext}", hex::encode(bytes))
}

fn random_time<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    q3(rng.random_range(lo..=hi))
}

/// Splits `[lo, hi]` into `n` ordered nonempty millisecond-aligned pieces.
fn cuts<R: Rng>(rng: &mut R, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let ms = ((hi - lo) * 1000.0).round() as u64;
    let mut points: Vec<u64> = Vec::new();
    while points.len() < n - 1 {
        let p = rng.random_range(1..ms);
        if !points.contains(&p) {
            points.push(p);
        }
    }
    points.sort();
    let mut bounds = vec![lo];
    bounds.extend(points.iter().map(|p| q3(lo + *p as f64 / 1000.0)));
    bounds.push(hi);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

fn random_graph<R: Rng>(rng: &mut R, ids: &[String]) -> StructureGraph {
    let mut relations = Vec::new();
    for _ in 0..rng.random_range(0..=ids.len()) {
        let a = ids.choose(rng).expect("nonempty").clone();
        if rng.random_bool(0.3) {
            let k = rng.random_range(2..=ids.len().max(2));
            let group: Vec<String> = ids.choose_multiple(rng, k).cloned().collect();
            relations.push(Relation::parallel(group));
        } else {
            relations.push(Relation::seq(a, ids.choose(rng).expect("nonempty").clone()));
        }
    }
    build_dag(ids, &relations).expect("repair always yields a dag").0
}

fn random_summary<R: Rng>(rng: &mut R) -> StepSummary {
    let concise = sentence(rng);
    let verbose = (0..rng.random_range(1..=3)).map(|_| sentence(rng)).collect::<Vec<_>>().join(" ");
    let mut highlights = Vec::new();
    for _ in 0..rng.random_range(0..3) {
        let target = if rng.random_bool(0.5) { HighlightTarget::Concise } else { HighlightTarget::Verbose };
        let len = if target == HighlightTarget::Concise { concise.chars().count() } else { verbose.chars().count() };
        let start = rng.random_range(0..len - 1);
        let end = rng.random_range(start + 1..=len);
        let kind = *[HighlightKind::Tip, HighlightKind::Warning, HighlightKind::Quantity].choose(rng).expect("nonempty");
        highlights.push(Highlight { target, start, end, kind });
    }
    highlights.sort();
    highlights.dedup();
    StepSummary {
        concise,
        verbose,
        emoji: rng.random_bool(0.6).then(|| EMOJI.choose(rng).expect("nonempty").to_string()),
        highlights,
        flags: if rng.random_bool(0.2) { vec!["FALLBACK".into()] } else { vec![] },
    }
}

/// A structurally valid scheme with random content; values already on the interchange grid.
pub fn random_scheme<R: Rng>(rng: &mut R) -> NoteScheme {
    let n_chapters = rng.random_range(1..=5);
    let duration = q3(rng.random_range(n_chapters as f64 * 4.0..600.0));
    let spans = cuts(rng, 0.0, duration, n_chapters);
    let chapter_ids: Vec<String> = (1..=n_chapters).map(|i| i.to_string()).collect();
    let chapter_graph = random_graph(rng, &chapter_ids);
    let mut frame = 0usize;
    let mut chapters = Vec::new();
    for (ci, &(t_s, t_e)) in spans.iter().enumerate() {
        let cid = ci as u32 + 1;
        let n_steps = rng.random_range(1..=4).min(((t_e - t_s) * 1000.0) as usize);
        let step_spans = cuts(rng, t_s, t_e, n_steps);
        let step_ids: Vec<String> = (1..=n_steps).map(|j| format!("{cid}.{j}")).collect();
        let g = random_graph(rng, &step_ids);
        let mut steps = Vec::new();
        for (sj, &(s_s, s_e)) in step_spans.iter().enumerate() {
            let sid = StepId { chapter: cid, step: sj as u32 + 1 };
            let mut keyframes = Vec::new();
            for _ in 0..rng.random_range(0..3) {
                frame += 1;
                let kind = *[KeyFrameKind::TextOverlay, KeyFrameKind::Diagram, KeyFrameKind::SpecialMark, KeyFrameKind::Perspective]
                    .choose(rng)
                    .expect("nonempty");
                let (ocr_text, explanation) = match kind {
                    KeyFrameKind::TextOverlay => (sentence(rng), String::new()),
                    KeyFrameKind::Diagram => (String::new(), sentence(rng)),
                    KeyFrameKind::SpecialMark => (String::new(), sentence(rng)),
                    KeyFrameKind::Perspective => (String::new(), String::new()),
                };
                keyframes.push(KeyFrameAnnotation {
                    kind,
                    frame_index: frame,
                    timestamp: random_time(rng, s_s, s_e),
                    ocr_text,
                    explanation,
                    asset: random_asset(rng, "png"),
                    flags: if kind == KeyFrameKind::Perspective && rng.random_bool(0.5) { vec!["LOW_CONFIDENCE".into()] } else { vec![] },
                });
            }
            let fallback = rng.random_bool(0.1);
            steps.push(StepNote {
                id: sid,
                title: sentence(rng),
                t_s: s_s,
                t_e: s_e,
                summary: random_summary(rng),
                thumbnail: Some(Thumbnail {
                    frame_index: rng.random_range(0..10_000),
                    timestamp: if fallback { random_time(rng, 0.0, duration) } else { random_time(rng, s_s, s_e) },
                    similarity: (rng.random_range(-1.0..1.0f64) * 1e6).round() / 1e6,
                    asset: random_asset(rng, "png"),
                    fallback,
                }),
                gif: rng.random_bool(0.5).then(|| random_asset(rng, "gif")),
                keyframes,
                successors: successors(&g, &sid.to_string()),
            });
        }
        chapters.push(ChapterNote {
            id: cid,
            title: sentence(rng),
            summary: sentence(rng),
            t_s,
            t_e,
            gif: rng.random_bool(0.8).then(|| random_asset(rng, "gif")),
            successors: successors(&chapter_graph, &cid.to_string()),
            steps,
            flags: if rng.random_bool(0.2) { vec!["CAPTION_SPARSE".into()] } else { vec![] },
        });
    }
    NoteScheme {
        schema_version: SCHEMA_VERSION.into(),
        video: VideoMeta {
            title: sentence(rng),
            duration,
            source_uri: format!("file:///videos/{}.nfv", rng.random_range(0..1000)),
        },
        chapters,
    }
}
