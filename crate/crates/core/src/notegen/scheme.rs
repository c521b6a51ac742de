//! The note scheme: structure, summaries, keyframes, thumbnails and timestamps.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::assets::is_asset_name;
use super::summary::{highlight_problem, is_single_emoji, ChapterSummary, StepSummary};
use super::thumbnail::Thumbnail;
use crate::error::{Error, Result};
use crate::keyinfo::dynamic::DynamicKeyframe;
use crate::keyinfo::{StaticAnnotation, StaticKind};
use crate::structure::dag::{validate_dag, StructureGraph};
use crate::structure::{HierarchicalTranscript, StepId};

pub const SCHEMA_VERSION: &str = "1";

/// Round to the millisecond grid used by the interchange format.
pub fn q3(t: f64) -> f64 {
    let r = (t * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KeyFrameKind {
    TextOverlay,
    Diagram,
    SpecialMark,
    Perspective,
}

impl KeyFrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyFrameKind::TextOverlay => "TEXT_OVERLAY",
            KeyFrameKind::Diagram => "DIAGRAM",
            KeyFrameKind::SpecialMark => "SPECIAL_MARK",
            KeyFrameKind::Perspective => "PERSPECTIVE",
        }
    }
}

impl From<StaticKind> for KeyFrameKind {
    fn from(k: StaticKind) -> Self {
        match k {
            StaticKind::TextOverlay => KeyFrameKind::TextOverlay,
            StaticKind::Diagram => KeyFrameKind::Diagram,
            StaticKind::SpecialMark => KeyFrameKind::SpecialMark,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFrameAnnotation {
    pub kind: KeyFrameKind,
    pub frame_index: usize,
    pub timestamp: f64,
    #[serde(default)]
    pub ocr_text: String,
    #[serde(default)]
    pub explanation: String,
    pub asset: String,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl KeyFrameAnnotation {
    pub fn from_static(a: &StaticAnnotation, asset: String) -> Self {
        Self {
            kind: a.kind.into(),
            frame_index: a.frame_index,
            timestamp: a.timestamp,
            ocr_text: a.ocr_text.clone(),
            explanation: a.explanation.clone(),
            asset,
            flags: Vec::new(),
        }
    }

    /// Placed at the post-boundary frame.
    pub fn from_dynamic(d: &DynamicKeyframe, asset: String) -> Self {
        Self {
            kind: KeyFrameKind::Perspective,
            frame_index: d.post_frame,
            timestamp: d.boundary_time,
            ocr_text: String::new(),
            explanation: String::new(),
            asset,
            flags: d.flags.clone(),
        }
    }

    fn order_key(&self) -> (u64, KeyFrameKind, usize) {
        ((self.timestamp * 1000.0).round() as u64, self.kind, self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub title: String,
    pub duration: f64,
    pub source_uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepNote {
    pub id: StepId,
    pub title: String,
    pub t_s: f64,
    pub t_e: f64,
    pub summary: StepSummary,
    pub thumbnail: Option<Thumbnail>,
    #[serde(default)]
    pub gif: Option<String>,
    #[serde(default)]
    pub keyframes: Vec<KeyFrameAnnotation>,
    #[serde(default)]
    pub successors: Vec<StepId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterNote {
    pub id: u32,
    pub title: String,
    pub summary: String,
    pub t_s: f64,
    pub t_e: f64,
    #[serde(default)]
    pub gif: Option<String>,
    #[serde(default)]
    pub successors: Vec<u32>,
    pub steps: Vec<StepNote>,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteScheme {
    pub schema_version: String,
    pub video: VideoMeta,
    pub chapters: Vec<ChapterNote>,
}

/// One broken invariant, located by field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeViolation {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemeViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl NoteScheme {
    pub fn steps(&self) -> impl Iterator<Item = &StepNote> {
        self.chapters.iter().flat_map(|c| c.steps.iter())
    }

    pub fn step(&self, id: StepId) -> Option<&StepNote> {
        self.steps().find(|s| s.id == id)
    }

    pub fn step_mut(&mut self, id: StepId) -> Option<&mut StepNote> {
        self.chapters.iter_mut().flat_map(|c| c.steps.iter_mut()).find(|s| s.id == id)
    }

    /// Graph induced by the chapter successor lists.
    pub fn chapter_graph(&self) -> StructureGraph {
        StructureGraph {
            nodes: self.chapters.iter().map(|c| c.id.to_string()).collect(),
            edges: self
                .chapters
                .iter()
                .flat_map(|c| c.successors.iter().map(move |s| (c.id.to_string(), s.to_string())))
                .collect(),
        }
    }

    /// Graph induced by the step successor lists of chapter `idx` (position, not id).
    pub fn step_graph(&self, idx: usize) -> StructureGraph {
        let c = &self.chapters[idx];
        StructureGraph {
            nodes: c.steps.iter().map(|s| s.id.to_string()).collect(),
            edges: c
                .steps
                .iter()
                .flat_map(|s| s.successors.iter().map(move |t| (s.id.to_string(), t.to_string())))
                .collect(),
        }
    }

    /// Every asset name the scheme references.
    pub fn asset_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for c in &self.chapters {
            out.extend(c.gif.clone());
            for s in &c.steps {
                out.extend(s.gif.clone());
                out.extend(s.thumbnail.as_ref().map(|t| t.asset.clone()));
                out.extend(s.keyframes.iter().map(|k| k.asset.clone()));
            }
        }
        out
    }

    /// Structural invariants; `asset_exists` additionally checks referenced assets.
    pub fn violations(&self, asset_exists: Option<&dyn Fn(&str) -> bool>) -> Vec<SchemeViolation> {
        let mut out = Vec::new();
        let mut bad = |path: String, message: String| out.push(SchemeViolation { path, message });
        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version".into(), format!("unsupported version `{}`", self.schema_version));
        }
        let duration = self.video.duration;
        if !(duration.is_finite() && duration > 0.0) {
            bad("video.duration".into(), format!("duration {duration} must be positive"));
        }
        if self.chapters.is_empty() {
            bad("chapters".into(), "no chapters".into());
        }
        let asset_ok = |name: &str| is_asset_name(name) && asset_exists.is_none_or(|f| f(name));
        let mut chapter_ids = BTreeSet::new();
        let mut step_ids = BTreeSet::new();
        let mut seen_keyframes = BTreeSet::new();
        let mut prev_end = 0.0;
        for (ci, c) in self.chapters.iter().enumerate() {
            let cp = format!("chapters[{ci}]");
            if !chapter_ids.insert(c.id) {
                bad(format!("{cp}.id"), format!("duplicate chapter id {}", c.id));
            }
            if c.t_s != prev_end {
                bad(format!("{cp}.t_s"), format!("chapter starts at {} but the previous ends at {prev_end}", c.t_s));
            }
            if !(c.t_s < c.t_e) {
                bad(format!("{cp}.t_e"), format!("empty span [{}, {}]", c.t_s, c.t_e));
            }
            prev_end = c.t_e;
            if c.summary.trim().is_empty() {
                bad(format!("{cp}.summary"), "empty summary".into());
            }
            if let Some(g) = &c.gif {
                if !asset_ok(g) {
                    bad(format!("{cp}.gif"), format!("missing asset `{g}`"));
                }
            }
            if c.steps.is_empty() {
                bad(format!("{cp}.steps"), "chapter has no steps".into());
            }
            let mut step_end = c.t_s;
            for (si, s) in c.steps.iter().enumerate() {
                let sp = format!("{cp}.steps[{si}]");
                if s.id.chapter != c.id {
                    bad(format!("{sp}.id"), format!("step {} filed under chapter {}", s.id, c.id));
                }
                if !step_ids.insert(s.id) {
                    bad(format!("{sp}.id"), format!("duplicate step id {}", s.id));
                }
                if !(s.t_s < s.t_e) || s.t_s < step_end || s.t_e > c.t_e {
                    bad(
                        format!("{sp}.t_s"),
                        format!("span [{}, {}] leaves the chapter or overlaps the previous step", s.t_s, s.t_e),
                    );
                }
                step_end = step_end.max(s.t_e);
                let sum = &s.summary;
                if sum.concise.trim().is_empty() {
                    bad(format!("{sp}.summary.concise"), "empty concise summary".into());
                }
                if sum.verbose.trim().is_empty() {
                    bad(format!("{sp}.summary.verbose"), "empty verbose summary".into());
                }
                if let Some(e) = &sum.emoji {
                    if !is_single_emoji(e) {
                        bad(format!("{sp}.summary.emoji"), format!("{e:?} is not one emoji"));
                    }
                }
                for (hi, h) in sum.highlights.iter().enumerate() {
                    if let Some(m) = highlight_problem(sum, h) {
                        bad(format!("{sp}.summary.highlights[{hi}]"), m);
                    }
                }
                match &s.thumbnail {
                    Some(t) => {
                        if !t.fallback && !(t.timestamp >= s.t_s && t.timestamp <= s.t_e) {
                            bad(format!("{sp}.thumbnail"), format!("frame at {} outside the step", t.timestamp));
                        }
                        if !asset_ok(&t.asset) {
                            bad(format!("{sp}.thumbnail.asset"), format!("missing asset `{}`", t.asset));
                        }
                    }
                    None => bad(format!("{sp}.thumbnail"), "step has no thumbnail".into()),
                }
                if let Some(g) = &s.gif {
                    if !asset_ok(g) {
                        bad(format!("{sp}.gif"), format!("missing asset `{g}`"));
                    }
                }
                for (ki, k) in s.keyframes.iter().enumerate() {
                    let kp = format!("{sp}.keyframes[{ki}]");
                    if !(k.timestamp >= s.t_s && k.timestamp <= s.t_e) {
                        bad(format!("{kp}.timestamp"), format!("{} outside the step", k.timestamp));
                    }
                    if !seen_keyframes.insert((k.kind, k.frame_index)) {
                        bad(kp.clone(), "keyframe attached twice".into());
                    }
                    let kind_problem = match k.kind {
                        KeyFrameKind::TextOverlay if k.ocr_text.trim().is_empty() => Some("TEXT_OVERLAY needs ocr_text"),
                        KeyFrameKind::Diagram if k.explanation.trim().is_empty() => Some("DIAGRAM needs explanation"),
                        KeyFrameKind::Perspective if !k.ocr_text.is_empty() => Some("PERSPECTIVE carries no ocr_text"),
                        _ => None,
                    };
                    if let Some(m) = kind_problem {
                        bad(format!("{kp}.kind"), m.into());
                    }
                    if !asset_ok(&k.asset) {
                        bad(format!("{kp}.asset"), format!("missing asset `{}`", k.asset));
                    }
                }
            }
            for v in validate_dag(&self.step_graph(ci)) {
                bad(format!("{cp}.steps"), format!("successors: {v}"));
            }
        }
        if !self.chapters.is_empty() && prev_end != duration {
            bad("chapters".into(), format!("chapters end at {prev_end}, video at {duration}"));
        }
        for v in validate_dag(&self.chapter_graph()) {
            bad("chapters".into(), format!("successors: {v}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations(None).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::validation(v.path, v.message)),
        }
    }
}

/// Sorted successor ids of `id` in `g`.
fn successor_ids<T: std::str::FromStr + Ord>(g: &StructureGraph, id: &str) -> Vec<T> {
    let mut out: Vec<T> = g.successors(id).into_iter().filter_map(|s| s.parse().ok()).collect();
    out.sort();
    out
}

/// Everything produced for one job, ready to be compiled.
#[derive(Debug, Clone, Default)]
pub struct SchemeParts {
    pub chapter_summaries: BTreeMap<u32, ChapterSummary>,
    pub step_summaries: BTreeMap<StepId, StepSummary>,
    pub thumbnails: BTreeMap<StepId, Thumbnail>,
    pub chapter_gifs: BTreeMap<u32, String>,
    pub step_gifs: BTreeMap<StepId, String>,
    /// Unattached keyframes with assets already stored.
    pub keyframes: Vec<KeyFrameAnnotation>,
}

/// Compile the scheme; any broken invariant aborts with DANGLING_REFERENCE.
pub fn assemble_scheme(
    video: VideoMeta,
    hierarchy: &HierarchicalTranscript,
    parts: &SchemeParts,
    asset_exists: &dyn Fn(&str) -> bool,
) -> Result<NoteScheme> {
    let dangling = |m: String| Error::DanglingReference(m);
    let mut chapters = Vec::with_capacity(hierarchy.chapters.len());
    for c in &hierarchy.chapters {
        let cid = c.id.to_string();
        let summary = parts
            .chapter_summaries
            .get(&c.id)
            .ok_or_else(|| dangling(format!("chapter {} has no summary", c.id)))?;
        let graph = hierarchy
            .step_graphs
            .get(&c.id)
            .ok_or_else(|| dangling(format!("chapter {} has no step graph", c.id)))?;
        let mut steps = Vec::with_capacity(c.steps.len());
        for s in &c.steps {
            let sid = s.id.to_string();
            let mut thumbnail = parts
                .thumbnails
                .get(&s.id)
                .cloned()
                .ok_or_else(|| dangling(format!("step {sid} has no thumbnail")))?;
            thumbnail.timestamp = q3(thumbnail.timestamp);
            steps.push(StepNote {
                id: s.id,
                title: s.title.clone(),
                t_s: q3(s.t_s),
                t_e: q3(s.t_e),
                summary: parts
                    .step_summaries
                    .get(&s.id)
                    .cloned()
                    .ok_or_else(|| dangling(format!("step {sid} has no summary")))?,
                thumbnail: Some(thumbnail),
                gif: parts.step_gifs.get(&s.id).cloned(),
                keyframes: Vec::new(),
                successors: successor_ids(graph, &sid),
            });
        }
        let mut flags = c.flags.clone();
        flags.extend(summary.flags.iter().filter(|f| !c.flags.contains(f)).cloned());
        chapters.push(ChapterNote {
            id: c.id,
            title: c.title.clone(),
            summary: summary.text.clone(),
            t_s: q3(c.t_s),
            t_e: q3(c.t_e),
            gif: parts.chapter_gifs.get(&c.id).cloned(),
            successors: successor_ids(&hierarchy.chapter_graph, &cid),
            steps,
            flags,
        });
    }

    // Later step wins at a shared boundary: take the last step starting at or before t.
    let mut keyframes = parts.keyframes.clone();
    for k in &mut keyframes {
        k.timestamp = q3(k.timestamp);
    }
    keyframes.sort_by_key(|k| k.order_key());
    for k in keyframes {
        let slot = chapters
            .iter_mut()
            .flat_map(|c| c.steps.iter_mut())
            .rev()
            .find(|s| s.t_s <= k.timestamp)
            .ok_or_else(|| dangling(format!("{} keyframe at {} precedes every step", k.kind.as_str(), k.timestamp)))?;
        slot.keyframes.push(k);
    }

    let scheme = NoteScheme {
        schema_version: SCHEMA_VERSION.to_string(),
        video: VideoMeta {
            duration: q3(video.duration),
            ..video
        },
        chapters,
    };
    let violations = scheme.violations(Some(asset_exists));
    if !violations.is_empty() {
        return Err(dangling(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")));
    }
    Ok(scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::dag::build_dag;
    use crate::structure::{Chapter, Step};

    fn asset(c: char) -> String {
        format!("{}.png", c.to_string().repeat(64))
    }

    fn step(chapter: u32, step: u32, t_s: f64, t_e: f64) -> Step {
        Step {
            id: StepId { chapter, step },
            title: format!("Step {step}"),
            t_s,
            t_e,
            captions: vec![],
            segments: vec![],
        }
    }

    /// One chapter [0, 10) with steps [0, 4) and [4, 10].
    fn hierarchy() -> HierarchicalTranscript {
        let steps = vec![step(1, 1, 0.0, 4.0), step(1, 2, 4.0, 10.0)];
        let ids: Vec<String> = steps.iter().map(|s| s.id.to_string()).collect();
        let (step_graph, _) = build_dag(&ids, &[]).unwrap();
        let (chapter_graph, _) = build_dag(&["1".to_string()], &[]).unwrap();
        HierarchicalTranscript {
            duration: 10.0,
            chapters: vec![Chapter {
                id: 1,
                title: "Only".into(),
                t_s: 0.0,
                t_e: 10.0,
                member_frames: vec![],
                captions: vec![],
                segments: vec![],
                flags: vec![],
                steps,
            }],
            chapter_graph,
            step_graphs: BTreeMap::from([(1, step_graph)]),
        }
    }

    fn parts() -> SchemeParts {
        let mut p = SchemeParts::default();
        p.chapter_summaries.insert(
            1,
            ChapterSummary {
                text: "Do it.".into(),
                flags: vec![],
            },
        );
        for (j, ts) in [(1, 1.0), (2, 6.0)] {
            let id = StepId { chapter: 1, step: j };
            p.step_summaries.insert(id, StepSummary::plain("Go.", "X"));
            p.thumbnails.insert(
                id,
                Thumbnail {
                    frame_index: ts as usize,
                    timestamp: ts,
                    similarity: 0.5,
                    asset: asset('a'),
                    fallback: false,
                },
            );
        }
        p
    }

    fn meta() -> VideoMeta {
        VideoMeta {
            title: "t".into(),
            duration: 10.0,
            source_uri: "mem://t".into(),
        }
    }

    fn keyframe(t: f64) -> KeyFrameAnnotation {
        KeyFrameAnnotation {
            kind: KeyFrameKind::Perspective,
            frame_index: t as usize,
            timestamp: t,
            ocr_text: String::new(),
            explanation: String::new(),
            asset: asset('b'),
            flags: vec![],
        }
    }

    #[test]
    fn boundary_keyframe_goes_to_later_step() {
        let mut p = parts();
        p.keyframes = vec![keyframe(4.0), keyframe(0.0), keyframe(10.0)];
        let s = assemble_scheme(meta(), &hierarchy(), &p, &|_| true).unwrap();
        let counts: Vec<usize> = s.steps().map(|s| s.keyframes.len()).collect();
        assert_eq!(counts, vec![1, 2]);
        assert_eq!(s.chapters[0].steps[1].keyframes[0].timestamp, 4.0);
        assert_eq!(s.chapters[0].steps[0].successors, vec![StepId { chapter: 1, step: 2 }]);
        s.validate().unwrap();
    }

    #[test]
    fn thumbnail_outside_step_is_dangling() {
        let mut p = parts();
        p.thumbnails.get_mut(&StepId { chapter: 1, step: 1 }).unwrap().timestamp = 7.0;
        let err = assemble_scheme(meta(), &hierarchy(), &p, &|_| true).unwrap_err();
        assert_eq!(err.code(), "DANGLING_REFERENCE");
        p.thumbnails.get_mut(&StepId { chapter: 1, step: 1 }).unwrap().fallback = true;
        assemble_scheme(meta(), &hierarchy(), &p, &|_| true).unwrap();
    }

    #[test]
    fn missing_assets_are_dangling() {
        let err = assemble_scheme(meta(), &hierarchy(), &parts(), &|n| n != asset('a')).unwrap_err();
        assert_eq!(err.code(), "DANGLING_REFERENCE");
    }

    #[test]
    fn successors_induce_the_graph() {
        let h = hierarchy();
        let s = assemble_scheme(meta(), &h, &parts(), &|_| true).unwrap();
        assert_eq!(s.step_graph(0), h.step_graphs[&1]);
        assert_eq!(s.chapter_graph(), h.chapter_graph);
    }

    #[test]
    fn quantize() {
        assert_eq!(q3(1.23456), 1.235);
        assert_eq!(q3(-0.0001), 0.0);
        assert!(q3(-0.0001).is_sign_positive());
    }
}
