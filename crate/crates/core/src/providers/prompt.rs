//! Prompt templates with `{{slot}}` placeholders.
//!
//! Built-in templates ship in `templates/` and can be overridden per file
//! from a directory (`<template_id>.txt`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Digest;

pub const DIFFERENTIAL_CAPTION: &str = "differential_caption";
pub const CLUSTER_CHAPTERS: &str = "cluster_chapters";
pub const EXTRACT_STEPS: &str = "extract_steps";
pub const CLASSIFY_RELATIONS: &str = "classify_relations";
pub const PLAN_STATIC: &str = "plan_static";
pub const DETECT_TEXT_OVERLAY: &str = "detect_text_overlay";
pub const DETECT_DIAGRAM: &str = "detect_diagram";
pub const DETECT_SPECIAL_MARK: &str = "detect_special_mark";
pub const SUMMARIZE_CHAPTER: &str = "summarize_chapter";
pub const SUMMARIZE_STEP: &str = "summarize_step";

const BUILTIN: &[(&str, &str, &str)] = &[
    (DIFFERENTIAL_CAPTION, "caption.v1", include_str!("../../templates/differential_caption.txt")),
    (CLUSTER_CHAPTERS, "chapters.v1", include_str!("../../templates/cluster_chapters.txt")),
    (EXTRACT_STEPS, "steps.v1", include_str!("../../templates/extract_steps.txt")),
    (CLASSIFY_RELATIONS, "relations.v1", include_str!("../../templates/classify_relations.txt")),
    (PLAN_STATIC, "plan.v1", include_str!("../../templates/plan_static.txt")),
    (DETECT_TEXT_OVERLAY, "detection.v1", include_str!("../../templates/detect_text_overlay.txt")),
    (DETECT_DIAGRAM, "detection.v1", include_str!("../../templates/detect_diagram.txt")),
    (DETECT_SPECIAL_MARK, "detection.v1", include_str!("../../templates/detect_special_mark.txt")),
    (SUMMARIZE_CHAPTER, "chapter_summary.v1", include_str!("../../templates/summarize_chapter.txt")),
    (SUMMARIZE_STEP, "step_summary.v1", include_str!("../../templates/summarize_step.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub text: String,
    pub schema_id: String,
}

impl Template {
    /// Placeholder names in order of first appearance.
    pub fn slot_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find("{{") {
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else { break };
            let name = after[..close].trim().to_string();
            if !names.contains(&name) {
                names.push(name);
            }
            rest = &after[close + 2..];
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub template_id: String,
    pub slots: BTreeMap<String, String>,
    pub response_schema_id: String,
}

impl StructuredPrompt {
    pub fn slot(&self, name: &str) -> Option<&str> {
        self.slots.get(name).map(String::as_str)
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.slots.insert(name.to_string(), value.into());
        self
    }

    /// Digest of the canonical slot map, used to key scripted mock responses.
    pub fn slot_digest(&self) -> Digest {
        let mut buf = String::new();
        for (k, v) in &self.slots {
            buf.push_str(k);
            buf.push('\u{1f}');
            buf.push_str(v);
            buf.push('\u{1e}');
        }
        Digest::of_bytes(buf.as_bytes())
    }

    /// Value of the `scope` slot, or empty.
    pub fn scope(&self) -> &str {
        self.slot("scope").unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, schema, text)| {
                (
                    id.to_string(),
                    Template {
                        text: text.to_string(),
                        schema_id: schema.to_string(),
                    },
                )
            })
            .collect();
        Self { templates }
    }

    /// Built-ins with any `<template_id>.txt` in `dir` substituted.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::builtin();
        for (id, template) in set.templates.iter_mut() {
            let path = dir.join(format!("{id}.txt"));
            if path.exists() {
                template.text = std::fs::read_to_string(&path)?;
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&Template> {
        self.templates
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown prompt template `{id}`")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Empty prompt for `id` carrying the template's response schema.
    pub fn prompt(&self, id: &str) -> Result<StructuredPrompt> {
        let t = self.get(id)?;
        Ok(StructuredPrompt {
            template_id: id.to_string(),
            slots: BTreeMap::new(),
            response_schema_id: t.schema_id.clone(),
        })
    }

    /// Fill placeholders; every slot the template names must be present.
    pub fn render(&self, prompt: &StructuredPrompt) -> Result<String> {
        let t = self.get(&prompt.template_id)?;
        let names = t.slot_names();
        let missing: BTreeSet<&str> = names
            .iter()
            .map(String::as_str)
            .filter(|n| !prompt.slots.contains_key(*n))
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "template `{}` has unfilled slots: {}",
                prompt.template_id,
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }
        let mut out = t.text.clone();
        for name in names {
            out = out.replace(&format!("{{{{{name}}}}}"), &prompt.slots[&name]);
        }
        Ok(out)
    }
}

/// One-JSON-object-per-line payloads used inside prompt slots.
pub mod lines {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CaptionLine {
        pub frame: usize,
        pub t: f64,
        pub kind: String,
        pub text: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SpeechLine {
        pub t_s: f64,
        pub t_e: f64,
        pub text: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ElementLine {
        pub id: String,
        pub t_s: f64,
        pub t_e: f64,
        pub content: String,
    }

    pub fn encode<T: Serialize>(items: &[T]) -> Vec<String> {
        items
            .iter()
            .map(|i| serde_json::to_string(i).expect("line payload serializes"))
            .collect()
    }

    /// Parse every line that decodes as `T`, skipping others.
    pub fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
        text.lines()
            .filter_map(|l| serde_json::from_str(l.trim()).ok())
            .collect()
    }
}

/// Keep the newest lines so the joined text fits in `max_chars`.
pub fn truncate_oldest_first(lines: &[String], max_chars: usize) -> String {
    let mut kept = Vec::new();
    let mut used = 0usize;
    for line in lines.iter().rev() {
        let cost = line.chars().count() + usize::from(!kept.is_empty());
        if used + cost > max_chars {
            break;
        }
        used += cost;
        kept.push(line.as_str());
    }
    kept.reverse();
    kept.join("\n")
}
