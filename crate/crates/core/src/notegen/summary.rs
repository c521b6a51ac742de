//! Chapter and step summaries with highlight spans.

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result, Warnings};
use crate::keyinfo::{StaticAnnotation, StaticKind};
use crate::providers::prompt::{self, StructuredPrompt};
use crate::providers::schema::{ChapterSummaryResponse, HighlightResponse, StepSummaryResponse};
use crate::providers::Providers;
use crate::structure::{CaptionKind, Chapter, Step};
use crate::text::{first_sentence, is_emoji_char, sentences, truncate_sentences};

pub const FLAG_FALLBACK: &str = "FALLBACK";
/// Verbose text was missing and copies the concise one.
pub const FLAG_VERBOSE_COPIED: &str = "VERBOSE_COPIED";
pub const FLAG_EMPTY_CONTENT: &str = "EMPTY_CONTENT";
pub const MAX_VERBOSE_SENTENCES: usize = 3;

const NONE: &str = "(none)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HighlightTarget {
    Concise,
    Verbose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HighlightKind {
    Tip,
    Warning,
    Quantity,
}

impl HighlightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HighlightKind::Tip => "TIP",
            HighlightKind::Warning => "WARNING",
            HighlightKind::Quantity => "QUANTITY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TIP" => Some(HighlightKind::Tip),
            "WARNING" => Some(HighlightKind::Warning),
            "QUANTITY" => Some(HighlightKind::Quantity),
            _ => None,
        }
    }
}

/// Character-offset span `[start, end)` into the concise or verbose text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Highlight {
    pub target: HighlightTarget,
    pub start: usize,
    pub end: usize,
    pub kind: HighlightKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSummary {
    pub concise: String,
    pub verbose: String,
    #[serde(default)]
    pub emoji: Option<String>,
    #[serde(default)]
    pub highlights: Vec<Highlight>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl StepSummary {
    pub fn text(&self, target: HighlightTarget) -> &str {
        match target {
            HighlightTarget::Concise => &self.concise,
            HighlightTarget::Verbose => &self.verbose,
        }
    }

    /// Text passing for a summary written without the provider.
    pub fn plain(text: &str, flag: &str) -> Self {
        Self {
            concise: text.to_string(),
            verbose: text.to_string(),
            emoji: None,
            highlights: Vec::new(),
            flags: vec![flag.to_string()],
        }
    }
}

/// `Some(message)` when `h` does not select a nonempty range of its target.
pub fn highlight_problem(summary: &StepSummary, h: &Highlight) -> Option<String> {
    let len = summary.text(h.target).chars().count();
    if h.start >= h.end || h.end > len {
        Some(format!("span {}..{} outside a {len}-character text", h.start, h.end))
    } else {
        None
    }
}

/// Exactly one grapheme cluster that contains an emoji code point.
pub fn is_single_emoji(s: &str) -> bool {
    s.graphemes(true).count() == 1 && s.chars().any(is_emoji_char)
}

/// Characters `[start, end)` of `s`.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let mut idx = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let a = idx.nth(start).unwrap_or(s.len());
    let b = if end > start {
        idx.nth(end - start - 1).unwrap_or(s.len())
    } else {
        a
    };
    &s[a..b]
}

fn char_offset(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

fn ensure_terminated(s: &str) -> String {
    let s = s.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

/// Tagged content lines in temporal order: `[frame] ` for change captions, `[speech] ` for segments.
pub fn chapter_content(chapter: &Chapter) -> Vec<String> {
    let mut items: Vec<(f64, u8, String)> = chapter
        .captions
        .iter()
        .filter(|c| c.kind == CaptionKind::Change && !c.text.trim().is_empty())
        .map(|c| (c.timestamp, 0, format!("[frame] {}", c.text.trim())))
        .chain(chapter.segments.iter().map(|s| (s.t_s, 1, format!("[speech] {}", s.text.trim()))))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    items.into_iter().map(|(_, _, l)| l).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterSummary {
    pub text: String,
    pub flags: Vec<String>,
}

fn chapter_fallback(chapter: &Chapter) -> String {
    chapter
        .segments
        .iter()
        .flat_map(|s| sentences(&s.text))
        .next()
        .map(str::to_string)
        .or_else(|| {
            chapter
                .captions
                .iter()
                .find(|c| !c.text.trim().is_empty())
                .map(|c| ensure_terminated(first_sentence(&c.text)))
        })
        .unwrap_or_else(|| ensure_terminated(&chapter.title))
}

pub fn summarize_chapter(providers: &Providers, chapter: &Chapter) -> Result<(ChapterSummary, Warnings)> {
    let lines = chapter_content(chapter);
    if lines.is_empty() {
        return Err(Error::EmptyContent(format!("chapter {} has no captions or speech", chapter.id)));
    }
    let mut warnings = Warnings::new();
    let p = providers
        .templates
        .prompt(prompt::SUMMARIZE_CHAPTER)?
        .set("scope", format!("chapter:{}", chapter.id))
        .set("content", lines.join("\n"));
    let summary = match providers.complete_structured(&p, &[]) {
        Ok(v) => {
            let r: ChapterSummaryResponse = serde_json::from_value(v).expect("validated chapter summary");
            ChapterSummary {
                text: first_sentence(&r.summary).to_string(),
                flags: Vec::new(),
            }
        }
        Err(e) => {
            warnings.push(format!("chapter {} summary fell back: {e}", chapter.id));
            ChapterSummary {
                text: chapter_fallback(chapter),
                flags: vec![FLAG_FALLBACK.to_string()],
            }
        }
    };
    Ok((summary, warnings))
}

fn bullet_list<'a>(items: impl Iterator<Item = &'a str>) -> String {
    let lines: Vec<String> = items.filter(|s| !s.trim().is_empty()).map(|s| format!("- {}", s.trim())).collect();
    if lines.is_empty() {
        NONE.to_string()
    } else {
        lines.join("\n")
    }
}

/// The single structured prompt for a step.
pub fn step_prompt(providers: &Providers, step: &Step, keyinfo: &[&StaticAnnotation]) -> Result<StructuredPrompt> {
    let transcript = step.segments.iter().map(|s| s.text.trim()).collect::<Vec<_>>().join(" ");
    let captions = bullet_list(
        step.captions
            .iter()
            .filter(|c| c.kind == CaptionKind::Change)
            .map(|c| c.text.as_str()),
    );
    let ocr = bullet_list(
        keyinfo
            .iter()
            .filter(|a| a.kind == StaticKind::TextOverlay)
            .map(|a| a.ocr_text.as_str()),
    );
    let diagrams = bullet_list(
        keyinfo
            .iter()
            .filter(|a| a.kind == StaticKind::Diagram)
            .map(|a| a.explanation.as_str()),
    );
    Ok(providers
        .templates
        .prompt(prompt::SUMMARIZE_STEP)?
        .set("scope", format!("step:{}", step.id))
        .set("transcript", if transcript.is_empty() { NONE.to_string() } else { transcript })
        .set("captions", captions)
        .set("ocr", ocr)
        .set("diagrams", diagrams))
}

fn step_fallback(step: &Step) -> String {
    step.segments
        .iter()
        .flat_map(|s| sentences(&s.text))
        .next()
        .map(str::to_string)
        .or_else(|| {
            step.captions
                .iter()
                .find(|c| !c.text.trim().is_empty())
                .map(|c| ensure_terminated(first_sentence(&c.text)))
        })
        .unwrap_or_else(|| {
            if step.title.trim().is_empty() {
                "Carry out this step.".to_string()
            } else {
                ensure_terminated(&step.title)
            }
        })
}

fn map_highlight(h: &HighlightResponse, concise: &str, verbose: &str) -> std::result::Result<Highlight, String> {
    let target = match h.target.trim().to_ascii_uppercase().as_str() {
        "CONCISE" => HighlightTarget::Concise,
        "VERBOSE" => HighlightTarget::Verbose,
        other => return Err(format!("unknown target `{other}`")),
    };
    let kind = HighlightKind::parse(&h.kind).ok_or_else(|| format!("unknown kind `{}`", h.kind))?;
    let text = if target == HighlightTarget::Concise { concise } else { verbose };
    let (start, end) = match (&h.text, h.start, h.end) {
        (Some(quote), _, _) if !quote.is_empty() => {
            let byte = text.find(quote.as_str()).ok_or_else(|| format!("`{quote}` not found in the {} text", h.target))?;
            let start = char_offset(text, byte);
            (start, start + quote.chars().count())
        }
        (_, Some(s), Some(e)) => (s, e),
        _ => return Err("highlight names neither a substring nor offsets".into()),
    };
    let len = text.chars().count();
    if start >= end || end > len {
        return Err(format!("span {start}..{end} outside a {len}-character text"));
    }
    Ok(Highlight { target, start, end, kind })
}

/// Both verbosity levels from one call; falls back to the first transcript sentence on failure.
pub fn summarize_step(providers: &Providers, step: &Step, keyinfo: &[&StaticAnnotation]) -> Result<(StepSummary, Warnings)> {
    let mut warnings = Warnings::new();
    if step.segments.is_empty() && step.captions.iter().all(|c| c.text.trim().is_empty()) && keyinfo.is_empty() {
        return Ok((StepSummary::plain(&step_fallback(step), FLAG_EMPTY_CONTENT), warnings));
    }
    let p = step_prompt(providers, step, keyinfo)?;
    let r: StepSummaryResponse = match providers.complete_structured(&p, &[]) {
        Ok(v) => serde_json::from_value(v).expect("validated step summary"),
        Err(e) => {
            warnings.push(format!("step {} summary fell back: {e}", step.id));
            return Ok((StepSummary::plain(&step_fallback(step), FLAG_FALLBACK), warnings));
        }
    };
    let concise = first_sentence(&r.concise).to_string();
    let mut flags = Vec::new();
    let verbose = match truncate_sentences(&r.verbose, MAX_VERBOSE_SENTENCES) {
        "" => {
            flags.push(FLAG_VERBOSE_COPIED.to_string());
            concise.clone()
        }
        v => v.to_string(),
    };
    let emoji = match r.emoji.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(e) if is_single_emoji(e) => Some(e.to_string()),
        Some(e) => {
            warnings.push(format!("step {}: dropped emoji {e:?}", step.id));
            None
        }
    };
    let mut highlights = Vec::new();
    for h in &r.highlights {
        match map_highlight(h, &concise, &verbose) {
            Ok(h) if !highlights.contains(&h) => highlights.push(h),
            Ok(_) => {}
            Err(why) => warnings.push(format!("step {}: dropped highlight: {why}", step.id)),
        }
    }
    highlights.sort();
    Ok((
        StepSummary {
            concise,
            verbose,
            emoji,
            highlights,
            flags,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;
    use crate::ingest::TranscriptSegment;
    use crate::providers::mock::MockTables;
    use crate::structure::{DifferentialCaption, StepId};

    fn seg(t: f64, text: &str) -> TranscriptSegment {
        TranscriptSegment {
            seg_id: 0,
            text: text.into(),
            t_s: t,
            t_e: t + 1.0,
        }
    }

    fn chapter(segments: Vec<TranscriptSegment>) -> Chapter {
        Chapter {
            id: 1,
            title: "Prep".into(),
            t_s: 0.0,
            t_e: 10.0,
            member_frames: vec![],
            captions: vec![],
            segments,
            flags: vec![],
            steps: vec![],
        }
    }

    fn step(segments: Vec<TranscriptSegment>) -> Step {
        Step {
            id: StepId { chapter: 1, step: 1 },
            title: "Check".into(),
            t_s: 0.0,
            t_e: 10.0,
            captions: vec![],
            segments,
        }
    }

    fn scripted(key: &str, reply: serde_json::Value) -> Providers {
        let mut t = MockTables::default();
        t.script(key, reply);
        Providers::mock(t, 1)
    }

    #[test]
    fn chapter_passthrough_and_truncation() {
        let c = chapter(vec![seg(0.0, "Sand it.")]);
        let p = scripted("summarize_chapter@chapter:1", json!({"summary": "Prepare the surface."}));
        assert_eq!(summarize_chapter(&p, &c).unwrap().0.text, "Prepare the surface.");
        let p = scripted("summarize_chapter@chapter:1", json!({"summary": "Prepare the surface. Then wait."}));
        assert_eq!(summarize_chapter(&p, &c).unwrap().0.text, "Prepare the surface.");
        let err = summarize_chapter(&p, &chapter(vec![])).unwrap_err();
        assert_eq!(err.code(), "EMPTY_CONTENT");
    }

    #[test]
    fn chapter_fallback_on_bad_output() {
        let c = chapter(vec![seg(0.0, "First we sand. Then paint.")]);
        let p = scripted("summarize_chapter@chapter:1", json!({"wrong": 1}));
        let (s, w) = summarize_chapter(&p, &c).unwrap();
        assert_eq!(s.text, "First we sand.");
        assert_eq!(s.flags, vec![FLAG_FALLBACK]);
        assert!(!w.is_empty());
    }

    #[test]
    fn warning_span_offsets() {
        let verbose = "Tilt the head back. Give rescue breaths only if unconscious. Repeat.";
        let p = scripted(
            "summarize_step@step:1.1",
            json!({
                "concise": "Open the airway.",
                "verbose": verbose,
                "emoji": "",
                "highlights": [{"target": "VERBOSE", "text": "only if unconscious", "kind": "WARNING"}]
            }),
        );
        let (s, w) = summarize_step(&p, &step(vec![seg(0.0, "Open the airway.")]), &[]).unwrap();
        assert!(w.is_empty(), "{w:?}");
        let start = verbose.find("only if unconscious").unwrap();
        assert_eq!(
            s.highlights,
            vec![Highlight {
                target: HighlightTarget::Verbose,
                start,
                end: start + "only if unconscious".len(),
                kind: HighlightKind::Warning
            }]
        );
        assert_eq!(char_slice(&s.verbose, start, start + 19), "only if unconscious");
        assert_eq!(s.emoji, None);
    }

    #[test]
    fn invalid_highlights_dropped() {
        let p = scripted(
            "summarize_step@step:1.1",
            json!({
                "concise": "Add salt.",
                "verbose": "Add salt. Stir. Taste. Serve.",
                "emoji": "🧂🧂",
                "highlights": [
                    {"target": "CONCISE", "start": 4, "end": 99, "kind": "TIP"},
                    {"target": "CONCISE", "text": "pepper", "kind": "TIP"},
                    {"target": "CONCISE", "text": "salt", "kind": "NOTE"},
                    {"target": "CONCISE", "start": 4, "end": 8, "kind": "QUANTITY"}
                ]
            }),
        );
        let (s, w) = summarize_step(&p, &step(vec![seg(0.0, "Add salt.")]), &[]).unwrap();
        assert_eq!(s.verbose, "Add salt. Stir. Taste.");
        assert_eq!(s.highlights.len(), 1);
        assert_eq!(char_slice(&s.concise, 4, 8), "salt");
        assert_eq!(w.len(), 4);
    }

    #[test]
    fn overlay_text_reaches_verbose() {
        let p = Providers::mock(MockTables::default(), 1);
        let ann = StaticAnnotation {
            frame_index: 3,
            timestamp: 3.0,
            kind: StaticKind::TextOverlay,
            ocr_text: "10 MIN".into(),
            explanation: String::new(),
        };
        let (s, _) = summarize_step(&p, &step(vec![seg(0.0, "Let it rest.")]), &[&ann]).unwrap();
        assert!(s.verbose.contains("10 MIN"), "{}", s.verbose);
        assert_eq!(s.concise, "Let it rest.");
    }

    #[test]
    fn provider_failure_fallback() {
        let p = scripted("summarize_step@step:1.1", json!({"concise": ""}));
        let (s, _) = summarize_step(&p, &step(vec![seg(0.0, "Mix well. Then bake.")]), &[]).unwrap();
        assert_eq!(s.concise, "Mix well.");
        assert_eq!(s.verbose, s.concise);
        assert!(s.highlights.is_empty());
        assert_eq!(s.flags, vec![FLAG_FALLBACK]);
    }

    #[test]
    fn content_lines_are_tagged() {
        let mut c = chapter(vec![seg(2.0, "Hello.")]);
        c.captions.push(DifferentialCaption {
            frame_index: 0,
            timestamp: 0.0,
            kind: CaptionKind::Change,
            text: "A bench.".into(),
        });
        assert_eq!(chapter_content(&c), vec!["[frame] A bench.", "[speech] Hello."]);
    }

    #[test]
    fn emoji_checks() {
        assert!(is_single_emoji("📝"));
        assert!(is_single_emoji("👍🏽"));
        assert!(!is_single_emoji("📝📝"));
        assert!(!is_single_emoji("a"));
    }
}
