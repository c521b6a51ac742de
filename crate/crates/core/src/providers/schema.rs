//! Response schemas for structured completions.
//!
//! A response is accepted only if it deserializes into the typed form for its
//! schema id and passes the schema's semantic checks.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub kind: String,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanResponse {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub frames: Vec<usize>,
    pub t_s: f64,
    pub t_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaptersResponse {
    pub chapters: Vec<SpanResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsResponse {
    pub steps: Vec<SpanResponse>,
}

/// Element ids may arrive as numbers or strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdValue {
    Num(u64),
    Text(String),
}

impl IdValue {
    pub fn as_key(&self) -> String {
        match self {
            IdValue::Num(n) => n.to_string(),
            IdValue::Text(s) => s.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationResponse {
    pub kind: String,
    #[serde(default)]
    pub from: Option<IdValue>,
    #[serde(default)]
    pub to: Option<IdValue>,
    #[serde(default)]
    pub group: Vec<IdValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationsResponse {
    pub relations: Vec<RelationResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskResponse {
    pub kind: String,
    #[serde(default)]
    pub instructions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub subtasks: Vec<SubtaskResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub present: bool,
    #[serde(default)]
    pub ocr_text: String,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterSummaryResponse {
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightResponse {
    pub target: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub start: Option<usize>,
    #[serde(default)]
    pub end: Option<usize>,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummaryResponse {
    pub concise: String,
    #[serde(default)]
    pub verbose: String,
    #[serde(default)]
    pub emoji: Option<String>,
    #[serde(default)]
    pub highlights: Vec<HighlightResponse>,
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}

fn spans_ok(spans: &[SpanResponse], what: &str) -> Result<(), String> {
    if spans.is_empty() {
        return Err(format!("`{what}` must not be empty"));
    }
    for (i, s) in spans.iter().enumerate() {
        if !s.t_s.is_finite() || !s.t_e.is_finite() {
            return Err(format!("`{what}[{i}]` has non-finite times"));
        }
    }
    Ok(())
}

/// Check `value` against `schema_id`.
pub fn validate(schema_id: &str, value: &Value) -> Result<(), String> {
    match schema_id {
        "caption.v1" => {
            let c: CaptionResponse = typed(value)?;
            match c.kind.as_str() {
                "CHANGE" if c.text.trim().is_empty() => Err("CHANGE caption needs text".into()),
                "CHANGE" | "CONTINUOUS" => Ok(()),
                other => Err(format!("unknown caption kind `{other}`")),
            }
        }
        "chapters.v1" => spans_ok(&typed::<ChaptersResponse>(value)?.chapters, "chapters"),
        "steps.v1" => spans_ok(&typed::<StepsResponse>(value)?.steps, "steps"),
        "relations.v1" => {
            let r: RelationsResponse = typed(value)?;
            for (i, rel) in r.relations.iter().enumerate() {
                match rel.kind.as_str() {
                    "SEQUENTIAL" if rel.from.is_none() => {
                        return Err(format!("`relations[{i}]` SEQUENTIAL needs `from`"))
                    }
                    "PARALLEL" if rel.group.is_empty() => {
                        return Err(format!("`relations[{i}]` PARALLEL needs `group`"))
                    }
                    "SEQUENTIAL" | "PARALLEL" => {}
                    other => return Err(format!("`relations[{i}]` unknown kind `{other}`")),
                }
            }
            Ok(())
        }
        "plan.v1" => {
            let p: PlanResponse = typed(value)?;
            if p.subtasks.is_empty() {
                return Err("`subtasks` must not be empty".into());
            }
            Ok(())
        }
        "detection.v1" => typed::<DetectionResponse>(value).map(|_| ()),
        "chapter_summary.v1" => {
            let s: ChapterSummaryResponse = typed(value)?;
            if s.summary.trim().is_empty() {
                return Err("`summary` must not be empty".into());
            }
            Ok(())
        }
        "step_summary.v1" => {
            let s: StepSummaryResponse = typed(value)?;
            if s.concise.trim().is_empty() {
                return Err("`concise` must not be empty".into());
            }
            Ok(())
        }
        other => Err(format!("unknown schema `{other}`")),
    }
}

/// Extract the JSON payload from model text, tolerating code fences and prose around it.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(v);
    }
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .map(str::trim);
    if let Some(inner) = unfenced {
        if let Ok(v) = serde_json::from_str::<Value>(inner) {
            return Ok(v);
        }
    }
    if let (Some(a), Some(b)) = (trimmed.find('{'), trimmed.rfind('}')) {
        if a < b {
            if let Ok(v) = serde_json::from_str::<Value>(&trimmed[a..=b]) {
                return Ok(v);
            }
        }
    }
    Err("response is not valid JSON".into())
}
