//! Hierarchical transcript: differential captions, chapters, steps and their graphs.

pub mod dag;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use dag::{build_dag, parallel_siblings, topological_layers, validate_dag, Relation, StructureGraph, Violation};

use crate::dedup::KeyframeSet;
use crate::error::{Error, Result, Warnings};
use crate::ingest::transcript::window_text;
use crate::ingest::{FrameRecord, TranscriptSegment};
use crate::par::{self, Exec};
use crate::providers::prompt::{self, lines, truncate_oldest_first};
use crate::providers::schema::{ChaptersResponse, RelationsResponse, SpanResponse, StepsResponse};
use crate::providers::Providers;

pub const CONTEXT_CHAR_LIMIT: usize = 8000;
pub const SNAP_TOLERANCE: f64 = 1.0;
/// Seconds of transcript on each side of a keyframe given to the captioner.
pub const CAPTION_CONTEXT_WINDOW: f64 = 10.0;

pub const FLAG_DEGRADED: &str = "DEGRADED";
pub const FLAG_CAPTION_SPARSE: &str = "CAPTION_SPARSE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaptionKind {
    Change,
    Continuous,
}

impl CaptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptionKind::Change => "CHANGE",
            CaptionKind::Continuous => "CONTINUOUS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialCaption {
    pub frame_index: usize,
    pub timestamp: f64,
    pub kind: CaptionKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct StepId {
    pub chapter: u32,
    pub step: u32,
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.chapter, self.step)
    }
}

impl FromStr for StepId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad step id `{s}`"));
        let (c, j) = s.split_once('.').ok_or_else(bad)?;
        Ok(StepId {
            chapter: c.parse().map_err(|_| bad())?,
            step: j.parse().map_err(|_| bad())?,
        })
    }
}

impl From<StepId> for String {
    fn from(id: StepId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for StepId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub id: StepId,
    pub title: String,
    pub t_s: f64,
    pub t_e: f64,
    pub captions: Vec<DifferentialCaption>,
    pub segments: Vec<TranscriptSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    pub id: u32,
    pub title: String,
    pub t_s: f64,
    pub t_e: f64,
    pub member_frames: Vec<usize>,
    pub captions: Vec<DifferentialCaption>,
    pub segments: Vec<TranscriptSegment>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl Chapter {
    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty() && self.segments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalTranscript {
    pub duration: f64,
    pub chapters: Vec<Chapter>,
    pub chapter_graph: StructureGraph,
    pub step_graphs: BTreeMap<u32, StructureGraph>,
}

impl HierarchicalTranscript {
    /// Node sets equal element ids, and every graph is a valid DAG.
    pub fn check(&self) -> Result<()> {
        let ids: Vec<String> = self.chapters.iter().map(|c| c.id.to_string()).collect();
        if self.chapter_graph.nodes != ids || !validate_dag(&self.chapter_graph).is_empty() {
            return Err(Error::InvalidGraph("chapter graph does not match chapters".into()));
        }
        for c in &self.chapters {
            let steps: Vec<String> = c.steps.iter().map(|s| s.id.to_string()).collect();
            let g = self
                .step_graphs
                .get(&c.id)
                .ok_or_else(|| Error::InvalidGraph(format!("chapter {} has no step graph", c.id)))?;
            if g.nodes != steps || !validate_dag(g).is_empty() {
                return Err(Error::InvalidGraph(format!("step graph of chapter {} does not match its steps", c.id)));
            }
        }
        if self.step_graphs.len() != self.chapters.len() {
            return Err(Error::InvalidGraph("step graphs for unknown chapters".into()));
        }
        Ok(())
    }

    pub fn dot(&self) -> String {
        let labels = self.chapters.iter().map(|c| (c.id.to_string(), c.title.clone())).collect();
        let mut out = self.chapter_graph.to_dot("chapters", &labels);
        for c in &self.chapters {
            let labels = c.steps.iter().map(|s| (s.id.to_string(), s.title.clone())).collect();
            out.push_str(&self.step_graphs[&c.id].to_dot(&format!("chapter {}", c.id), &labels));
        }
        out
    }
}

/// Caption each keyframe against the previous keyframe.
pub fn caption_keyframes(
    providers: &Providers,
    keyframes: &KeyframeSet,
    frames: &[FrameRecord],
    transcript: &[TranscriptSegment],
    exec: Exec,
) -> Result<(Vec<DifferentialCaption>, Warnings)> {
    if keyframes.indices.is_empty() {
        return Err(Error::InvalidArgument("no keyframes to caption".into()));
    }
    let lookup = |i: usize| {
        frames
            .iter()
            .find(|f| f.index == i)
            .ok_or_else(|| Error::InvalidArgument(format!("keyframe {i} not among sampled frames")))
    };
    let pairs: Vec<(Option<&FrameRecord>, &FrameRecord)> = keyframes
        .indices
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let prev = if k == 0 { None } else { Some(lookup(keyframes.indices[k - 1])?) };
            Ok((prev, lookup(i)?))
        })
        .collect::<Result<_>>()?;
    let results = par::map(exec, &pairs, |(prev, cur)| {
        let context = window_text(transcript, cur.timestamp - CAPTION_CONTEXT_WINDOW, cur.timestamp + CAPTION_CONTEXT_WINDOW);
        providers.caption_pair(*prev, cur, &context)
    });
    let mut warnings = Warnings::new();
    let mut out = Vec::with_capacity(results.len());
    for ((prev, cur), r) in pairs.iter().zip(results) {
        match r {
            Ok(c) => out.push(c),
            Err(Error::SchemaViolation { detail, .. }) => {
                warnings.push(format!("caption: frame {} downgraded after unusable output: {detail}", cur.index));
                out.push(DifferentialCaption {
                    frame_index: cur.index,
                    timestamp: cur.timestamp,
                    kind: if prev.is_none() { CaptionKind::Change } else { CaptionKind::Continuous },
                    text: if prev.is_none() { "Opening frame of the video.".into() } else { String::new() },
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, warnings))
}

struct Span {
    title: String,
    t_s: f64,
    t_e: f64,
}

/// Clamp to `[lo, hi]`, sort, clip overlaps, optionally close gaps (tiling), then snap boundaries.
fn normalize_spans(raw: &[SpanResponse], lo: f64, hi: f64, tile: bool, snap_points: &[f64], warnings: &mut Warnings) -> Vec<Span> {
    let mut spans: Vec<Span> = raw
        .iter()
        .filter(|s| s.t_s.is_finite() && s.t_e.is_finite())
        .map(|s| Span {
            title: s.title.trim().to_string(),
            t_s: s.t_s.clamp(lo, hi),
            t_e: s.t_e.clamp(lo, hi),
        })
        .filter(|s| s.t_e > s.t_s)
        .collect();
    if spans.len() < raw.len() {
        warnings.push(format!("spans: dropped {} empty or out-of-range spans", raw.len() - spans.len()));
    }
    spans.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.t_e.total_cmp(&b.t_e)));
    let mut out: Vec<Span> = Vec::new();
    for mut s in spans {
        if let Some(prev) = out.last() {
            if s.t_s < prev.t_e {
                warnings.push(format!("spans: clipped overlap at {:.3}", s.t_s));
                s.t_s = prev.t_e;
            }
        }
        if s.t_e > s.t_s {
            out.push(s);
        }
    }
    if tile && !out.is_empty() {
        out[0].t_s = lo;
        for i in 1..out.len() {
            let start = out[i].t_s;
            out[i - 1].t_e = start;
        }
        out.last_mut().unwrap().t_e = hi;
    }
    for i in 1..out.len() {
        let abutting = (out[i - 1].t_e - out[i].t_s).abs() < 1e-9;
        let b = out[i].t_s;
        let lower = out[i - 1].t_s;
        let upper = out[i].t_e;
        let nearest = snap_points
            .iter()
            .copied()
            .filter(|p| (p - b).abs() <= SNAP_TOLERANCE && *p > lower && *p < upper)
            .min_by(|x, y| (x - b).abs().total_cmp(&(y - b).abs()));
        if let Some(p) = nearest {
            if abutting {
                out[i - 1].t_e = p;
            } else if p < out[i - 1].t_e {
                continue;
            }
            out[i].t_s = p;
        }
    }
    out
}

fn boundaries(segments: &[TranscriptSegment]) -> Vec<f64> {
    segments.iter().flat_map(|s| [s.t_s, s.t_e]).collect()
}

fn in_span(t: f64, t_s: f64, t_e: f64, closed: bool) -> bool {
    t >= t_s && (t < t_e || (closed && t <= t_e))
}

fn caption_lines(captions: &[DifferentialCaption]) -> String {
    let encoded = lines::encode(
        &captions
            .iter()
            .map(|c| lines::CaptionLine {
                frame: c.frame_index,
                t: c.timestamp,
                kind: c.kind.as_str().to_string(),
                text: c.text.clone(),
            })
            .collect::<Vec<_>>(),
    );
    truncate_oldest_first(&encoded, CONTEXT_CHAR_LIMIT)
}

fn speech_lines(segments: &[TranscriptSegment]) -> String {
    let encoded = lines::encode(
        &segments
            .iter()
            .map(|s| lines::SpeechLine {
                t_s: s.t_s,
                t_e: s.t_e,
                text: s.text.clone(),
            })
            .collect::<Vec<_>>(),
    );
    truncate_oldest_first(&encoded, CONTEXT_CHAR_LIMIT)
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        "(none)".into()
    } else {
        s
    }
}

fn make_chapter(id: u32, title: String, t_s: f64, t_e: f64, last: bool, captions: &[DifferentialCaption], transcript: &[TranscriptSegment]) -> Chapter {
    let caps: Vec<DifferentialCaption> = captions.iter().filter(|c| in_span(c.timestamp, t_s, t_e, last)).cloned().collect();
    let segs: Vec<TranscriptSegment> = transcript.iter().filter(|s| in_span(s.t_s, t_s, t_e, last)).cloned().collect();
    let mut flags = Vec::new();
    if caps.is_empty() {
        flags.push(FLAG_CAPTION_SPARSE.to_string());
    }
    Chapter {
        id,
        title: if title.is_empty() { format!("Chapter {id}") } else { title },
        t_s,
        t_e,
        member_frames: caps.iter().map(|c| c.frame_index).collect(),
        captions: caps,
        segments: segs,
        flags,
        steps: Vec::new(),
    }
}

/// Group captions and speech into chapters tiling `[0, duration]`.
pub fn cluster_chapters(
    providers: &Providers,
    captions: &[DifferentialCaption],
    transcript: &[TranscriptSegment],
    duration: f64,
) -> Result<(Vec<Chapter>, Warnings)> {
    if captions.is_empty() && transcript.is_empty() {
        return Err(Error::InvalidArgument("chapter clustering needs captions or transcript".into()));
    }
    if !(duration > 0.0) {
        return Err(Error::EmptyVideo);
    }
    let mut warnings = Warnings::new();
    let p = providers
        .templates
        .prompt(prompt::CLUSTER_CHAPTERS)?
        .set("scope", "video")
        .set("duration", format!("{duration:.3}"))
        .set("captions", or_none(caption_lines(captions)))
        .set("transcript", or_none(speech_lines(transcript)));
    let spans = match providers.complete_structured(&p, &[]) {
        Ok(v) => {
            let r: ChaptersResponse = serde_json::from_value(v).expect("validated chapters");
            normalize_spans(&r.chapters, 0.0, duration, true, &boundaries(transcript), &mut warnings)
        }
        Err(Error::SchemaViolation { detail, .. }) => {
            warnings.push(format!("chapters: falling back to one chapter: {detail}"));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    if spans.is_empty() {
        let mut c = make_chapter(1, String::new(), 0.0, duration, true, captions, transcript);
        c.flags.push(FLAG_DEGRADED.to_string());
        return Ok((vec![c], warnings));
    }
    let n = spans.len();
    let chapters = spans
        .into_iter()
        .enumerate()
        .map(|(i, s)| make_chapter(i as u32 + 1, s.title, s.t_s, s.t_e, i + 1 == n, captions, transcript))
        .collect::<Vec<_>>();
    for c in chapters.iter().filter(|c| c.has_flag(FLAG_CAPTION_SPARSE)) {
        warnings.push(format!("chapters: chapter {} has no keyframe captions", c.id));
    }
    Ok((chapters, warnings))
}

fn make_step(chapter: &Chapter, j: u32, title: String, t_s: f64, t_e: f64, last: bool) -> Step {
    Step {
        id: StepId { chapter: chapter.id, step: j },
        title: if title.is_empty() { format!("Step {j}") } else { title },
        t_s,
        t_e,
        captions: chapter.captions.iter().filter(|c| in_span(c.timestamp, t_s, t_e, last)).cloned().collect(),
        segments: chapter.segments.iter().filter(|s| in_span(s.t_s, t_s, t_e, last)).cloned().collect(),
    }
}

/// Split a chapter into steps clipped to its span.
pub fn extract_steps(providers: &Providers, chapter: &Chapter, last_chapter: bool) -> Result<(Vec<Step>, Warnings)> {
    let mut warnings = Warnings::new();
    let whole = |title: String| vec![make_step(chapter, 1, title, chapter.t_s, chapter.t_e, last_chapter)];
    if chapter.is_empty() {
        warnings.push(format!("steps: chapter {} has no content, using one step", chapter.id));
        return Ok((whole(chapter.title.clone()), warnings));
    }
    let p = providers
        .templates
        .prompt(prompt::EXTRACT_STEPS)?
        .set("scope", format!("chapter:{}", chapter.id))
        .set("chapter_id", chapter.id.to_string())
        .set("t_s", format!("{:.3}", chapter.t_s))
        .set("t_e", format!("{:.3}", chapter.t_e))
        .set("captions", or_none(caption_lines(&chapter.captions)))
        .set("transcript", or_none(speech_lines(&chapter.segments)));
    let spans = match providers.complete_structured(&p, &[]) {
        Ok(v) => {
            let r: StepsResponse = serde_json::from_value(v).expect("validated steps");
            normalize_spans(&r.steps, chapter.t_s, chapter.t_e, true, &boundaries(&chapter.segments), &mut warnings)
        }
        Err(Error::SchemaViolation { detail, .. }) => {
            warnings.push(format!("steps: chapter {} falling back to one step: {detail}", chapter.id));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    if spans.is_empty() {
        return Ok((whole(chapter.title.clone()), warnings));
    }
    let n = spans.len();
    let steps = spans
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let last = last_chapter && j + 1 == n && (s.t_e - chapter.t_e).abs() < 1e-9;
            make_step(chapter, j as u32 + 1, s.title, s.t_s, s.t_e, last)
        })
        .collect();
    Ok((steps, warnings))
}

/// An element offered to relation classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub t_s: f64,
    pub t_e: f64,
    pub content: String,
}

impl Element {
    pub fn of_chapter(c: &Chapter) -> Self {
        let content = c
            .segments
            .iter()
            .map(|s| s.text.as_str())
            .chain(c.captions.iter().filter(|x| !x.text.is_empty()).map(|x| x.text.as_str()))
            .collect::<Vec<_>>()
            .join(" ");
        Element {
            id: c.id.to_string(),
            t_s: c.t_s,
            t_e: c.t_e,
            content: format!("{}: {}", c.title, content),
        }
    }

    pub fn of_step(s: &Step) -> Self {
        let content = s.segments.iter().map(|x| x.text.as_str()).collect::<Vec<_>>().join(" ");
        Element {
            id: s.id.to_string(),
            t_s: s.t_s,
            t_e: s.t_e,
            content: format!("{}: {}", s.title, content),
        }
    }
}

fn sequential_chain(elements: &[Element]) -> Vec<Relation> {
    if elements.len() == 1 {
        return vec![Relation::Sequential {
            from: elements[0].id.clone(),
            to: None,
        }];
    }
    elements.windows(2).map(|w| Relation::seq(w[0].id.clone(), w[1].id.clone())).collect()
}

/// Ask the provider for sequential/parallel relations among `elements` (temporal order).
pub fn classify_relations(providers: &Providers, level: &str, scope: &str, elements: &[Element]) -> Result<(Vec<Relation>, Warnings)> {
    let mut warnings = Warnings::new();
    if elements.is_empty() {
        return Err(Error::InvalidArgument("no elements to relate".into()));
    }
    if elements.len() == 1 {
        return Ok((sequential_chain(elements), warnings));
    }
    let payload = lines::encode(
        &elements
            .iter()
            .map(|e| lines::ElementLine {
                id: e.id.clone(),
                t_s: e.t_s,
                t_e: e.t_e,
                content: e.content.chars().take(600).collect(),
            })
            .collect::<Vec<_>>(),
    );
    let p = providers
        .templates
        .prompt(prompt::CLASSIFY_RELATIONS)?
        .set("level", level)
        .set("scope", scope)
        .set("elements", truncate_oldest_first(&payload, CONTEXT_CHAR_LIMIT));
    let response = match providers.complete_structured(&p, &[]) {
        Ok(v) => serde_json::from_value::<RelationsResponse>(v).expect("validated relations"),
        Err(Error::SchemaViolation { detail, .. }) => {
            warnings.push(format!("relations: {scope} falling back to a sequential chain: {detail}"));
            return Ok((sequential_chain(elements), warnings));
        }
        Err(e) => return Err(e),
    };
    let known = |id: &str| elements.iter().any(|e| e.id == id);
    let mut out = Vec::new();
    for r in response.relations {
        let rel = match r.kind.as_str() {
            "SEQUENTIAL" => Relation::Sequential {
                from: r.from.map(|f| f.as_key()).unwrap_or_default(),
                to: r.to.map(|t| t.as_key()),
            },
            _ => Relation::Parallel {
                group: r.group.iter().map(|g| g.as_key()).collect(),
            },
        };
        if let Some(bad) = rel.ids().into_iter().find(|id| !known(id)) {
            warnings.push(format!("relations: {scope} dropped relation naming unknown id {bad}"));
            continue;
        }
        out.push(rel);
    }
    if out.is_empty() {
        warnings.push(format!("relations: {scope} has no usable relations, using a sequential chain"));
        return Ok((sequential_chain(elements), warnings));
    }
    // Elements the provider never mentioned keep their place in the timeline.
    for (i, e) in elements.iter().enumerate() {
        if out.iter().any(|r| r.ids().contains(&e.id.as_str())) {
            continue;
        }
        if i > 0 {
            out.push(Relation::seq(elements[i - 1].id.clone(), e.id.clone()));
        }
        if i + 1 < elements.len() {
            out.push(Relation::seq(e.id.clone(), elements[i + 1].id.clone()));
        }
    }
    Ok((out, warnings))
}

/// Chapters, steps and both graph levels.
pub fn build_hierarchy(
    providers: &Providers,
    captions: &[DifferentialCaption],
    transcript: &[TranscriptSegment],
    duration: f64,
) -> Result<(HierarchicalTranscript, Warnings)> {
    let (mut chapters, mut warnings) = cluster_chapters(providers, captions, transcript, duration)?;
    let n = chapters.len();
    for (i, c) in chapters.iter_mut().enumerate() {
        let (steps, w) = extract_steps(providers, c, i + 1 == n)?;
        warnings.extend(w);
        c.steps = steps;
    }
    let elements: Vec<Element> = chapters.iter().map(Element::of_chapter).collect();
    let (relations, w) = classify_relations(providers, "chapter", "video", &elements)?;
    warnings.extend(w);
    let ids: Vec<String> = elements.iter().map(|e| e.id.clone()).collect();
    let (chapter_graph, w) = build_dag(&ids, &relations)?;
    warnings.extend(w);
    let mut step_graphs = BTreeMap::new();
    for c in &chapters {
        let elements: Vec<Element> = c.steps.iter().map(Element::of_step).collect();
        let (relations, w) = classify_relations(providers, "step", &format!("chapter:{}", c.id), &elements)?;
        warnings.extend(w);
        let ids: Vec<String> = elements.iter().map(|e| e.id.clone()).collect();
        let (g, w) = build_dag(&ids, &relations)?;
        warnings.extend(w);
        step_graphs.insert(c.id, g);
    }
    let h = HierarchicalTranscript {
        duration,
        chapters,
        chapter_graph,
        step_graphs,
    };
    h.check()?;
    Ok((h, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::MockTables;
    use serde_json::json;

    fn span(t_s: f64, t_e: f64) -> SpanResponse {
        SpanResponse {
            title: String::new(),
            frames: vec![],
            t_s,
            t_e,
        }
    }

    fn seg(id: usize, t_s: f64, t_e: f64, text: &str) -> TranscriptSegment {
        TranscriptSegment {
            seg_id: id,
            text: text.into(),
            t_s,
            t_e,
        }
    }

    fn cap(i: usize, t: f64) -> DifferentialCaption {
        DifferentialCaption {
            frame_index: i,
            timestamp: t,
            kind: CaptionKind::Change,
            text: format!("frame {i}"),
        }
    }

    #[test]
    fn overlapping_chapter_spans_are_clipped() {
        let mut w = Warnings::new();
        let out = normalize_spans(&[span(0.0, 10.0), span(8.0, 20.0)], 0.0, 20.0, true, &[], &mut w);
        let got: Vec<(f64, f64)> = out.iter().map(|s| (s.t_s, s.t_e)).collect();
        assert_eq!(got, vec![(0.0, 10.0), (10.0, 20.0)]);
    }

    #[test]
    fn gaps_go_to_preceding_chapter() {
        let mut w = Warnings::new();
        let out = normalize_spans(&[span(2.0, 5.0), span(7.0, 9.0)], 0.0, 12.0, true, &[], &mut w);
        let got: Vec<(f64, f64)> = out.iter().map(|s| (s.t_s, s.t_e)).collect();
        assert_eq!(got, vec![(0.0, 7.0), (7.0, 12.0)]);
    }

    #[test]
    fn boundaries_snap_to_sentences() {
        let mut w = Warnings::new();
        let out = normalize_spans(&[span(0.0, 10.4), span(10.4, 20.0)], 0.0, 20.0, true, &[0.0, 9.8, 11.0], &mut w);
        assert_eq!(out[0].t_e, 9.8);
        assert_eq!(out[1].t_s, 9.8);
        let far = normalize_spans(&[span(0.0, 10.0), span(10.0, 20.0)], 0.0, 20.0, true, &[12.5], &mut w);
        assert_eq!(far[0].t_e, 10.0);
    }

    #[test]
    fn steps_outside_chapter_are_clipped() {
        let mut w = Warnings::new();
        let out = normalize_spans(&[span(8.0, 14.0), span(14.0, 30.0)], 10.0, 20.0, true, &[], &mut w);
        let got: Vec<(f64, f64)> = out.iter().map(|s| (s.t_s, s.t_e)).collect();
        assert_eq!(got, vec![(10.0, 14.0), (14.0, 20.0)]);
    }

    #[test]
    fn single_caption_gives_one_chapter() {
        let p = Providers::mock(MockTables::default(), 0);
        let (chapters, _) = cluster_chapters(&p, &[cap(0, 0.0)], &[], 30.0).unwrap();
        assert_eq!(chapters.len(), 1);
        assert_eq!((chapters[0].t_s, chapters[0].t_e), (0.0, 30.0));
    }

    #[test]
    fn schema_failure_degrades_to_one_chapter() {
        let mut t = MockTables::default();
        t.script("cluster_chapters", json!({"nope": 1}));
        let p = Providers::mock(t, 0);
        let (chapters, w) = cluster_chapters(&p, &[cap(0, 0.0), cap(3, 3.0)], &[], 10.0).unwrap();
        assert_eq!(chapters.len(), 1);
        assert!(chapters[0].has_flag(FLAG_DEGRADED));
        assert!(w.contains("falling back"));
    }

    #[test]
    fn chapter_content_splits_on_half_open_spans() {
        let mut t = MockTables::default();
        t.script(
            "cluster_chapters",
            json!({"chapters": [{"title": "A", "t_s": 0, "t_e": 5}, {"title": "B", "t_s": 5, "t_e": 10}]}),
        );
        let p = Providers::mock(t, 0);
        let caps = [cap(0, 0.0), cap(5, 5.0), cap(10, 10.0)];
        let segs = [seg(0, 0.0, 2.0, "One."), seg(1, 5.0, 7.0, "Two.")];
        let (chapters, _) = cluster_chapters(&p, &caps, &segs, 10.0).unwrap();
        assert_eq!(chapters[0].member_frames, vec![0]);
        assert_eq!(chapters[1].member_frames, vec![5, 10]);
        assert_eq!(chapters[1].segments.len(), 1);
        assert_eq!(chapters.iter().map(|c| c.id).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn one_sentence_chapter_gives_one_step() {
        let p = Providers::mock(MockTables::default(), 0);
        let c = make_chapter(1, "A".into(), 0.0, 10.0, true, &[cap(0, 0.0)], &[seg(0, 1.0, 3.0, "Do it.")]);
        let (steps, _) = extract_steps(&p, &c, true).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].id.to_string(), "1.1");
    }

    #[test]
    fn relations_with_unknown_ids_fall_back() {
        let mut t = MockTables::default();
        t.script("classify_relations", json!({"relations": [{"kind": "SEQUENTIAL", "from": 1, "to": 9}]}));
        let p = Providers::mock(t, 0);
        let els: Vec<Element> = (1..=3)
            .map(|i| Element {
                id: i.to_string(),
                t_s: i as f64,
                t_e: i as f64 + 1.0,
                content: String::new(),
            })
            .collect();
        let (rels, w) = classify_relations(&p, "chapter", "video", &els).unwrap();
        assert!(w.contains("unknown id 9"));
        assert_eq!(rels, vec![Relation::seq("1", "2"), Relation::seq("2", "3")]);
    }

    #[test]
    fn step_id_round_trip() {
        let id: StepId = "3.12".parse().unwrap();
        assert_eq!(id, StepId { chapter: 3, step: 12 });
        assert_eq!(serde_json::to_string(&id).unwrap(), "\"3.12\"");
        assert!("3".parse::<StepId>().is_err());
    }
}
