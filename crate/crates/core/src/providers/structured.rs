use serde_json::Value;

use super::prompt::{self, StructuredPrompt};
use super::schema::{self, CaptionResponse, DetectionResponse};
use super::{CompletionRequest, Providers};
use crate::error::{Error, Result};
use crate::ingest::FrameRecord;
use crate::keyinfo::StaticKind;
use crate::structure::{CaptionKind, DifferentialCaption};

/// Outcome of one static-annotation subtask on one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detection {
    pub present: bool,
    pub ocr_text: String,
    pub explanation: String,
}

/// A positive detection already recorded for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHit {
    pub kind: StaticKind,
    pub ocr_text: String,
    pub explanation: String,
}

fn check(schema_id: &str, text: &str) -> std::result::Result<Value, String> {
    let value = schema::extract_json(text)?;
    schema::validate(schema_id, &value)?;
    Ok(value)
}

impl Providers {
    /// Run a structured prompt; one repair re-ask on a schema violation, then error.
    pub fn complete_structured(&self, prompt: &StructuredPrompt, images: &[&FrameRecord]) -> Result<Value> {
        let rendered = self.templates.render(prompt)?;
        let mut request = CompletionRequest {
            prompt,
            rendered: rendered.clone(),
            images: images.to_vec(),
            attempt: 0,
            repair_note: None,
        };
        let first = self.language.complete(&request)?;
        let detail = match check(&prompt.response_schema_id, &first) {
            Ok(v) => return Ok(v),
            Err(detail) => detail,
        };
        tracing::debug!(template = %prompt.template_id, %detail, "re-asking after schema violation");
        let note = format!(
            "Your previous reply was rejected: {detail}. Reply again with JSON that matches the requested format exactly."
        );
        request.rendered = format!("{rendered}\n\n{note}");
        request.repair_note = Some(note);
        request.attempt = 1;
        let second = self.language.complete(&request)?;
        check(&prompt.response_schema_id, &second).map_err(|detail| Error::SchemaViolation {
            schema: prompt.response_schema_id.clone(),
            detail,
        })
    }

    /// Caption `cur` relative to `prev`; the first keyframe is always a CHANGE.
    pub fn caption_pair(
        &self,
        prev: Option<&FrameRecord>,
        cur: &FrameRecord,
        context: &str,
    ) -> Result<DifferentialCaption> {
        let p = self
            .templates
            .prompt(prompt::DIFFERENTIAL_CAPTION)?
            .set("scope", format!("frame:{}", cur.index))
            .set("has_previous", if prev.is_some() { "yes" } else { "no" })
            .set("context", if context.is_empty() { "(none)" } else { context });
        let images: Vec<&FrameRecord> = prev.into_iter().chain(std::iter::once(cur)).collect();
        let value = self.complete_structured(&p, &images)?;
        let c: CaptionResponse = serde_json::from_value(value).expect("validated caption");
        let text = c.text.trim().to_string();
        let caption = match (prev, c.kind.as_str()) {
            (None, _) => DifferentialCaption {
                frame_index: cur.index,
                timestamp: cur.timestamp,
                kind: CaptionKind::Change,
                text: if text.is_empty() {
                    "Opening frame of the video.".to_string()
                } else {
                    text
                },
            },
            (Some(_), "CONTINUOUS") => DifferentialCaption {
                frame_index: cur.index,
                timestamp: cur.timestamp,
                kind: CaptionKind::Continuous,
                text: String::new(),
            },
            (Some(_), _) => DifferentialCaption {
                frame_index: cur.index,
                timestamp: cur.timestamp,
                kind: CaptionKind::Change,
                text,
            },
        };
        Ok(caption)
    }

    /// Run one static subtask on a frame with its transcript window.
    pub fn detect_annotations(
        &self,
        frame: &FrameRecord,
        subtask: StaticKind,
        guidance: &str,
        transcript_window: &str,
        previous: &[DetectionHit],
    ) -> Result<Detection> {
        let previous_text = if previous.is_empty() {
            "(none)".to_string()
        } else {
            previous
                .iter()
                .map(|h| format!("- {}: {} {}", h.kind.as_str(), h.ocr_text, h.explanation).trim_end().to_string())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let mut p = self
            .templates
            .prompt(subtask.template_id())?
            .set("scope", format!("frame:{}", frame.index))
            .set("guidance", guidance)
            .set(
                "transcript",
                if transcript_window.is_empty() { "(no speech)" } else { transcript_window },
            );
        if subtask == StaticKind::SpecialMark {
            p = p.set("previous", previous_text);
        }
        let value = self.complete_structured(&p, &[frame])?;
        let d: DetectionResponse = serde_json::from_value(value).expect("validated detection");
        Ok(Detection {
            present: d.present,
            ocr_text: d.ocr_text.trim().to_string(),
            explanation: d.explanation.trim().to_string(),
        })
    }
}
