//! Key information: static annotations found by per-frame subtasks, and
//! dynamic keyframes at perspective changes.

pub mod dynamic;
pub mod histogram;
pub mod keypoints;
pub mod ssim;

use serde::{Deserialize, Serialize};

pub use dynamic::{
    classify_boundary, detect_dynamic_keyframes, detect_scene_boundaries, DynamicConfig, DynamicKeyframe, SceneBoundary,
    SimilarityProfile, Thresholds, LOW_CONFIDENCE,
};
pub use histogram::histogram_distance;
pub use keypoints::keypoint_match_ratio;
pub use ssim::ssim;

use crate::error::{Error, Result, Warnings};
use crate::ingest::transcript::window_text;
use crate::ingest::{FrameRecord, TranscriptSegment};
use crate::par::{self, Exec};
use crate::providers::prompt;
use crate::providers::schema::PlanResponse;
use crate::providers::{DetectionHit, Providers};
use crate::text::squash;

/// Seconds of transcript on either side of a frame passed to each subtask.
pub const TRANSCRIPT_WINDOW: f64 = 10.0;
pub const FLAG_FALLBACK: &str = "FALLBACK";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StaticKind {
    TextOverlay,
    Diagram,
    SpecialMark,
}

impl StaticKind {
    pub const ORDER: [StaticKind; 3] = [StaticKind::TextOverlay, StaticKind::Diagram, StaticKind::SpecialMark];

    pub fn as_str(self) -> &'static str {
        match self {
            StaticKind::TextOverlay => "TEXT_OVERLAY",
            StaticKind::Diagram => "DIAGRAM",
            StaticKind::SpecialMark => "SPECIAL_MARK",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ORDER.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn template_id(self) -> &'static str {
        match self {
            StaticKind::TextOverlay => prompt::DETECT_TEXT_OVERLAY,
            StaticKind::Diagram => prompt::DETECT_DIAGRAM,
            StaticKind::SpecialMark => prompt::DETECT_SPECIAL_MARK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticAnnotation {
    pub frame_index: usize,
    pub timestamp: f64,
    pub kind: StaticKind,
    pub ocr_text: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtask {
    pub kind: StaticKind,
    /// Planner instructions merged into the shipped template's `guidance` slot.
    pub guidance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskPlan {
    pub subtasks: Vec<Subtask>,
    pub flags: Vec<String>,
}

impl SubtaskPlan {
    /// The shipped templates with no planner guidance.
    pub fn shipped() -> Self {
        Self {
            subtasks: StaticKind::ORDER
                .iter()
                .map(|&kind| Subtask {
                    kind,
                    guidance: String::new(),
                })
                .collect(),
            flags: Vec::new(),
        }
    }

    pub fn is_fallback(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_FALLBACK)
    }
}

pub fn plan_static_subtasks(providers: &Providers, query: &str) -> Result<(SubtaskPlan, Warnings)> {
    if query.trim().is_empty() {
        return Err(Error::InvalidArgument("planner query must not be empty".into()));
    }
    let mut warnings = Warnings::new();
    let p = providers
        .templates
        .prompt(prompt::PLAN_STATIC)?
        .set("scope", "video")
        .set("query", query.trim());
    let response = match providers.complete_structured(&p, &[]) {
        Ok(v) => serde_json::from_value::<PlanResponse>(v).expect("validated plan"),
        Err(e) => {
            warnings.push(format!("planner: using shipped templates: {e}"));
            let mut plan = SubtaskPlan::shipped();
            plan.flags.push(FLAG_FALLBACK.into());
            return Ok((plan, warnings));
        }
    };
    let mut plan = SubtaskPlan::shipped();
    for s in response.subtasks {
        match StaticKind::parse(&s.kind) {
            Some(kind) => {
                let slot = plan.subtasks.iter_mut().find(|t| t.kind == kind).expect("fixed kinds");
                if slot.guidance.is_empty() {
                    slot.guidance = s.instructions.trim().to_string();
                } else {
                    warnings.push(format!("planner: repeated subtask {} ignored", kind.as_str()));
                }
            }
            None => warnings.push(format!("planner: dropped unsupported subtask `{}`", s.kind)),
        }
    }
    Ok((plan, warnings))
}

fn normalized(s: &str) -> String {
    squash(s).to_lowercase()
}

/// True when a special mark repeats text or an explanation already found on the frame.
fn duplicates(hit: &DetectionHit, earlier: &[DetectionHit]) -> bool {
    let (ocr, expl) = (normalized(&hit.ocr_text), normalized(&hit.explanation));
    earlier.iter().any(|e| {
        (!ocr.is_empty() && normalized(&e.ocr_text) == ocr) || (!expl.is_empty() && normalized(&e.explanation) == expl)
    })
}

fn extract_frame(
    providers: &Providers,
    frame: &FrameRecord,
    transcript: &[TranscriptSegment],
    plan: &SubtaskPlan,
    warnings: &mut Warnings,
) -> Result<Vec<StaticAnnotation>> {
    let window = window_text(transcript, frame.timestamp - TRANSCRIPT_WINDOW, frame.timestamp + TRANSCRIPT_WINDOW);
    let mut hits: Vec<DetectionHit> = Vec::new();
    for subtask in &plan.subtasks {
        let d = providers.detect_annotations(frame, subtask.kind, &subtask.guidance, &window, &hits)?;
        if !d.present {
            continue;
        }
        let hit = DetectionHit {
            kind: subtask.kind,
            ocr_text: d.ocr_text,
            explanation: d.explanation,
        };
        let invalid = match hit.kind {
            StaticKind::TextOverlay => hit.ocr_text.is_empty(),
            StaticKind::Diagram => hit.explanation.is_empty(),
            StaticKind::SpecialMark => hit.ocr_text.is_empty() && hit.explanation.is_empty(),
        };
        if invalid {
            warnings.push(format!("static: frame {} {} hit without content dropped", frame.index, hit.kind.as_str()));
            continue;
        }
        if hit.kind == StaticKind::SpecialMark && duplicates(&hit, &hits) {
            tracing::debug!(frame = frame.index, "special mark duplicates an earlier hit");
            continue;
        }
        hits.push(hit);
    }
    Ok(hits
        .into_iter()
        .map(|h| StaticAnnotation {
            frame_index: frame.index,
            timestamp: frame.timestamp,
            kind: h.kind,
            ocr_text: h.ocr_text,
            explanation: h.explanation,
        })
        .collect())
}

/// Run the plan on each keyframe; subtasks in order within a frame, frames independently.
pub fn run_static_extraction(
    providers: &Providers,
    keyframes: &[&FrameRecord],
    transcript: &[TranscriptSegment],
    plan: &SubtaskPlan,
    exec: Exec,
) -> (Vec<StaticAnnotation>, Warnings) {
    let results = par::map(exec, keyframes, |f| {
        let mut w = Warnings::new();
        let r = extract_frame(providers, f, transcript, plan, &mut w);
        (r, w)
    });
    let mut warnings = Warnings::new();
    let mut out = Vec::new();
    for (f, (r, w)) in keyframes.iter().zip(results) {
        warnings.extend(w);
        match r {
            Ok(a) => out.extend(a),
            Err(e) => warnings.push(format!("static: frame {} skipped: {e}", f.index)),
        }
    }
    (out, warnings)
}

/// `time<TAB>kind<TAB>ocr<TAB>explanation` lines, in time order.
pub fn report_lines(annotations: &[StaticAnnotation], dynamic: &[DynamicKeyframe]) -> String {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut rows: Vec<(f64, String)> = annotations
        .iter()
        .map(|a| {
            (
                a.timestamp,
                format!("{:.3}\t{}\t{}\t{}", a.timestamp, a.kind.as_str(), clean(&a.ocr_text), clean(&a.explanation)),
            )
        })
        .collect();
    rows.extend(dynamic.iter().map(|d| {
        let note = if d.low_confidence() { " (low confidence)" } else { "" };
        (
            d.boundary_time,
            format!("{:.3}\tPERSPECTIVE_CHANGE\t\tperspective change{note}", d.boundary_time),
        )
    }));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows.into_iter().map(|(_, r)| r + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Raster;
    use crate::providers::mock::{MockTables, ScriptedAnnotation};
    use serde_json::json;

    fn frame(i: usize, rgb: [u8; 3]) -> FrameRecord {
        FrameRecord::new(i, i as f64, Raster::solid(8, 8, rgb))
    }

    #[test]
    fn plan_has_fixed_order() {
        let p = Providers::mock(MockTables::default(), 0);
        let (plan, _) = plan_static_subtasks(&p, "cooking video").unwrap();
        let kinds: Vec<_> = plan.subtasks.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, StaticKind::ORDER.to_vec());
        assert!(!plan.is_fallback());
    }

    #[test]
    fn extra_subtask_dropped() {
        let mut t = MockTables::default();
        t.script(
            "plan_static",
            json!({"subtasks": [
                {"kind": "SPECIAL_MARK", "instructions": "c"},
                {"kind": "FACES", "instructions": "x"},
                {"kind": "TEXT_OVERLAY", "instructions": "a"}
            ]}),
        );
        let p = Providers::mock(t, 0);
        let (plan, w) = plan_static_subtasks(&p, "q").unwrap();
        assert!(w.contains("FACES"));
        assert_eq!(plan.subtasks.len(), 3);
        assert_eq!(plan.subtasks[0].guidance, "a");
        assert_eq!(plan.subtasks[2].guidance, "c");
    }

    #[test]
    fn planner_failure_falls_back() {
        let mut t = MockTables::default();
        t.script("plan_static", json!({"subtasks": []}));
        let (plan, _) = plan_static_subtasks(&Providers::mock(t, 0), "q").unwrap();
        assert!(plan.is_fallback());
        assert_eq!(plan.subtasks.len(), 3);
    }

    #[test]
    fn duplicate_special_mark_discarded() {
        let f = frame(0, [200, 0, 0]);
        let mut t = MockTables::default();
        t.annotations.insert(
            f.content_digest.hex(),
            vec![
                ScriptedAnnotation {
                    kind: StaticKind::TextOverlay,
                    ocr_text: "10 MIN".into(),
                    explanation: "cook time".into(),
                },
                ScriptedAnnotation {
                    kind: StaticKind::SpecialMark,
                    ocr_text: "10 min".into(),
                    explanation: "circled".into(),
                },
            ],
        );
        let p = Providers::mock(t, 0);
        let (a, _) = run_static_extraction(&p, &[&f], &[], &SubtaskPlan::shipped(), Exec::Sequential);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].kind, StaticKind::TextOverlay);
        assert_eq!(a[0].ocr_text, "10 MIN");
    }

    #[test]
    fn negative_frames_yield_nothing() {
        let p = Providers::mock(MockTables::default(), 0);
        let frames = [frame(0, [1, 1, 1]), frame(1, [2, 2, 2])];
        let refs: Vec<&FrameRecord> = frames.iter().collect();
        let (a, w) = run_static_extraction(&p, &refs, &[], &SubtaskPlan::shipped(), Exec::Parallel);
        assert!(a.is_empty());
        assert!(w.is_empty());
    }
}
