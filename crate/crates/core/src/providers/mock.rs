//! Deterministic providers driven by fixture tables.
//!
//! A mock directory may contain any of:
//!
//! - `captions.json`: `{ "<frame digest>": "caption text" }`
//! - `annotations.json`: `{ "<frame digest>": [{"kind": "TEXT_OVERLAY", "ocr_text": "..", "explanation": ".."}] }`
//! - `completions.json`: scripted structured replies keyed by `template#<slot digest>`,
//!   `template@<scope>` or `template` (most specific wins). A string value is returned
//!   verbatim; `{"__attempts": [..]}` scripts the first reply and the repair re-ask.
//! - `embeddings.json`: `{ "<modality>": { "<digest or text>": [f64, ..] } }`
//! - `transcript.tsv`: `t_s<TAB>t_e<TAB>text` lines returned by the mock transcriber.
//!
//! Anything not scripted falls back to simple content-derived rules so that any
//! video can run end to end offline.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};

use super::prompt::{self, lines};
use super::{CompletionRequest, DepthEstimator, Embedder, EmbeddingVector, LanguageModel, Modality, Transcriber};
use crate::error::{Error, Result};
use crate::ingest::transcript::{parse_tsv, to_tsv};
use crate::ingest::{AudioTrack, FrameRecord, RawSegment};
use crate::keyinfo::StaticKind;
use crate::media::ScalarMap;
use crate::text::{first_sentence, sentences};

pub const DEFAULT_MOCK_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedAnnotation {
    pub kind: StaticKind,
    #[serde(default)]
    pub ocr_text: String,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockTables {
    pub captions: BTreeMap<String, String>,
    pub annotations: BTreeMap<String, Vec<ScriptedAnnotation>>,
    pub completions: BTreeMap<String, Value>,
    pub embeddings: BTreeMap<Modality, BTreeMap<String, Vec<f64>>>,
    pub transcript: Vec<RawSegment>,
    pub dim: Option<usize>,
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Option<T>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("mock table serializes");
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

impl MockTables {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!("mock directory {} does not exist", dir.display())));
        }
        let transcript_path = dir.join("transcript.tsv");
        let transcript = if transcript_path.exists() {
            parse_tsv(&std::fs::read_to_string(transcript_path)?)?
        } else {
            Vec::new()
        };
        let dim = read_json::<Value>(dir, "mock.json")?
            .and_then(|v| v.get("dim").and_then(Value::as_u64))
            .map(|d| d as usize);
        Ok(Self {
            captions: read_json(dir, "captions.json")?.unwrap_or_default(),
            annotations: read_json(dir, "annotations.json")?.unwrap_or_default(),
            completions: read_json(dir, "completions.json")?.unwrap_or_default(),
            embeddings: read_json(dir, "embeddings.json")?.unwrap_or_default(),
            transcript,
            dim,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if !self.captions.is_empty() {
            write_json(dir, "captions.json", &self.captions)?;
        }
        if !self.annotations.is_empty() {
            write_json(dir, "annotations.json", &self.annotations)?;
        }
        if !self.completions.is_empty() {
            write_json(dir, "completions.json", &self.completions)?;
        }
        if !self.embeddings.is_empty() {
            write_json(dir, "embeddings.json", &self.embeddings)?;
        }
        if !self.transcript.is_empty() {
            std::fs::write(dir.join("transcript.tsv"), to_tsv(&self.transcript))?;
        }
        if let Some(dim) = self.dim {
            write_json(dir, "mock.json", &json!({ "dim": dim }))?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(DEFAULT_MOCK_DIM)
    }

    pub fn set_embedding(&mut self, modality: Modality, key: impl Into<String>, values: Vec<f64>) {
        self.embeddings.entry(modality).or_default().insert(key.into(), values);
    }

    pub fn script(&mut self, key: impl Into<String>, reply: Value) {
        self.completions.insert(key.into(), reply);
    }
}

/// Seeded pseudo-random unit vectors keyed by content digest (images) or text.
pub struct MockEmbedder {
    tables: Arc<MockTables>,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(tables: Arc<MockTables>, seed: u64) -> Self {
        Self { tables, seed }
    }

    fn vector(&self, modality: Modality, key: &str) -> Result<EmbeddingVector> {
        let dim = self.tables.dim();
        if let Some(v) = self.tables.embeddings.get(&modality).and_then(|t| t.get(key)) {
            if v.len() > dim {
                return Err(Error::Config(format!(
                    "mock embedding override for {key} has {} values, dimension is {dim}",
                    v.len()
                )));
            }
            let mut values = v.clone();
            values.resize(dim, 0.0);
            return EmbeddingVector::new(normalized(values)?, modality);
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(modality.as_str().as_bytes());
        h.update([0]);
        h.update(key.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        EmbeddingVector::new(normalized(values)?, modality)
    }
}

fn normalized(mut values: Vec<f64>) -> Result<Vec<f64>> {
    let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    values.iter_mut().for_each(|v| *v /= n);
    Ok(values)
}

impl Embedder for MockEmbedder {
    fn dim(&self, _: Modality) -> usize {
        self.tables.dim()
    }

    fn embed_image(&self, frame: &FrameRecord, modality: Modality) -> Result<EmbeddingVector> {
        self.vector(modality, &frame.content_digest.hex())
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.vector(Modality::JointText, text.trim())
    }
}

/// Depth proportional to luminance.
pub struct MockDepth;

impl DepthEstimator for MockDepth {
    fn estimate(&self, frame: &FrameRecord) -> Result<ScalarMap> {
        Ok(ScalarMap {
            width: frame.image.width(),
            height: frame.image.height(),
            values: frame.image.luma().into_iter().map(|y| (y / 255.0).clamp(0.0, 1.0)).collect(),
        })
    }
}

pub struct MockTranscriber {
    tables: Arc<MockTables>,
}

impl MockTranscriber {
    pub fn new(tables: Arc<MockTables>) -> Self {
        Self { tables }
    }
}

impl Transcriber for MockTranscriber {
    fn transcribe(&self, _audio: &AudioTrack) -> Result<Vec<RawSegment>> {
        Ok(self.tables.transcript.clone())
    }
}

pub struct MockLanguageModel {
    tables: Arc<MockTables>,
}

impl MockLanguageModel {
    pub fn new(tables: Arc<MockTables>) -> Self {
        Self { tables }
    }

    fn scripted(&self, req: &CompletionRequest<'_>) -> Option<String> {
        let p = req.prompt;
        let keys = [
            format!("{}#{}", p.template_id, p.slot_digest().hex()),
            format!("{}@{}", p.template_id, p.scope()),
            p.template_id.clone(),
        ];
        let value = keys.iter().find_map(|k| self.tables.completions.get(k))?;
        let value = match value.get("__attempts").and_then(Value::as_array) {
            Some(list) if !list.is_empty() => &list[(req.attempt as usize).min(list.len() - 1)],
            _ => value,
        };
        Some(match value {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }
}

impl LanguageModel for MockLanguageModel {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String> {
        if let Some(reply) = self.scripted(req) {
            return Ok(reply);
        }
        let p = req.prompt;
        let reply = match p.template_id.as_str() {
            prompt::DIFFERENTIAL_CAPTION => self.caption(req),
            prompt::DETECT_TEXT_OVERLAY => self.detection(req, StaticKind::TextOverlay),
            prompt::DETECT_DIAGRAM => self.detection(req, StaticKind::Diagram),
            prompt::DETECT_SPECIAL_MARK => self.detection(req, StaticKind::SpecialMark),
            prompt::PLAN_STATIC => json!({"subtasks": [
                {"kind": "TEXT_OVERLAY", "instructions": "Report overlay text tied to the task."},
                {"kind": "DIAGRAM", "instructions": "Explain inserted graphics using the speech."},
                {"kind": "SPECIAL_MARK", "instructions": "Report emphasis marks not already found."}
            ]}),
            prompt::CLUSTER_CHAPTERS => heuristic_chapters(p.slots.get("duration"), p.slot("captions"), p.slot("transcript")),
            prompt::EXTRACT_STEPS => heuristic_steps(p.slot("t_s"), p.slot("t_e"), p.slot("transcript")),
            prompt::CLASSIFY_RELATIONS => heuristic_relations(p.slot("elements").unwrap_or("")),
            prompt::SUMMARIZE_CHAPTER => heuristic_chapter_summary(p.slot("content").unwrap_or("")),
            prompt::SUMMARIZE_STEP => heuristic_step_summary(
                p.slot("transcript").unwrap_or(""),
                p.slot("captions").unwrap_or(""),
                p.slot("ocr").unwrap_or(""),
                p.slot("diagrams").unwrap_or(""),
            ),
            other => return Err(Error::Config(format!("mock language model has no rule for `{other}`"))),
        };
        Ok(reply.to_string())
    }
}

impl MockLanguageModel {
    fn caption(&self, req: &CompletionRequest<'_>) -> Value {
        let cur = req.images.last().expect("caption request carries the current frame");
        let prev = if req.images.len() > 1 { req.images.first() } else { None };
        if let Some(prev) = prev {
            if prev.content_digest == cur.content_digest {
                return json!({"kind": "CONTINUOUS", "text": ""});
            }
        }
        let text = self
            .tables
            .captions
            .get(&cur.content_digest.hex())
            .cloned()
            .unwrap_or_else(|| format!("Scene {} at {:.0} s.", cur.content_digest.short(), cur.timestamp));
        json!({"kind": "CHANGE", "text": text})
    }

    fn detection(&self, req: &CompletionRequest<'_>, kind: StaticKind) -> Value {
        let frame = req.images.last().expect("detection request carries a frame");
        let hit = self
            .tables
            .annotations
            .get(&frame.content_digest.hex())
            .and_then(|hits| hits.iter().find(|h| h.kind == kind));
        match hit {
            Some(h) => json!({"present": true, "ocr_text": h.ocr_text, "explanation": h.explanation}),
            None => json!({"present": false, "ocr_text": "", "explanation": ""}),
        }
    }
}

fn parse_f64(s: Option<&str>) -> f64 {
    s.and_then(|v| v.trim().parse().ok()).unwrap_or(0.0)
}

fn title_of(text: &str) -> String {
    let words: Vec<&str> = text.split_whitespace().take(6).collect();
    words.join(" ").trim_end_matches(['.', '!', '?', ',']).to_string()
}

/// New chapter at each CHANGE caption at least a sixth of the video after the previous start.
fn heuristic_chapters(duration: Option<&String>, captions: Option<&str>, transcript: Option<&str>) -> Value {
    let duration = parse_f64(duration.map(String::as_str)).max(1e-3);
    let caps: Vec<lines::CaptionLine> = lines::decode(captions.unwrap_or(""));
    let speech: Vec<lines::SpeechLine> = lines::decode(transcript.unwrap_or(""));
    let min_gap = (duration / 6.0).max(1.0);
    let mut starts = vec![0.0];
    for c in caps.iter().filter(|c| c.kind == "CHANGE") {
        if c.t - starts.last().unwrap() >= min_gap && duration - c.t >= min_gap / 2.0 {
            starts.push(c.t);
        }
    }
    let chapters: Vec<Value> = starts
        .iter()
        .enumerate()
        .map(|(i, &t_s)| {
            let t_e = starts.get(i + 1).copied().unwrap_or(duration);
            let frames: Vec<usize> = caps.iter().filter(|c| c.t >= t_s && c.t < t_e).map(|c| c.frame).collect();
            let title = speech
                .iter()
                .find(|s| s.t_s >= t_s && s.t_s < t_e)
                .map(|s| title_of(&s.text))
                .or_else(|| caps.iter().find(|c| c.t >= t_s && c.t < t_e && !c.text.is_empty()).map(|c| title_of(&c.text)))
                .unwrap_or_else(|| format!("Part {}", i + 1));
            json!({"title": title, "frames": frames, "t_s": t_s, "t_e": t_e})
        })
        .collect();
    json!({ "chapters": chapters })
}

/// One step per transcript sentence (grouped to at most six), else one step.
fn heuristic_steps(t_s: Option<&str>, t_e: Option<&str>, transcript: Option<&str>) -> Value {
    let (t_s, t_e) = (parse_f64(t_s), parse_f64(t_e));
    let speech: Vec<lines::SpeechLine> = lines::decode(transcript.unwrap_or(""));
    if speech.is_empty() {
        return json!({"steps": [{"title": "Carry out this part", "t_s": t_s, "t_e": t_e}]});
    }
    let groups = speech.len().min(6);
    let per = speech.len().div_ceil(groups);
    let steps: Vec<Value> = speech
        .chunks(per)
        .map(|chunk| {
            json!({
                "title": title_of(&chunk[0].text),
                "t_s": chunk[0].t_s,
                "t_e": chunk[chunk.len() - 1].t_e,
            })
        })
        .collect();
    json!({ "steps": steps })
}

fn heuristic_relations(elements: &str) -> Value {
    let mut els: Vec<lines::ElementLine> = lines::decode(elements);
    els.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
    let relations: Vec<Value> = if els.len() == 1 {
        vec![json!({"kind": "SEQUENTIAL", "from": els[0].id})]
    } else {
        els.windows(2)
            .map(|w| json!({"kind": "SEQUENTIAL", "from": w[0].id, "to": w[1].id}))
            .collect()
    };
    json!({ "relations": relations })
}

fn content_lines<'a>(content: &'a str, tag: &str) -> impl Iterator<Item = &'a str> + 'a {
    let prefix = format!("[{tag}] ");
    content
        .lines()
        .filter_map(move |l| l.strip_prefix(prefix.as_str()))
        .filter(|l| !l.trim().is_empty())
}

fn heuristic_chapter_summary(content: &str) -> Value {
    let summary = content_lines(content, "speech")
        .next()
        .or_else(|| content_lines(content, "frame").next())
        .map(|l| first_sentence(l).to_string())
        .unwrap_or_else(|| "Overview of this part of the task.".to_string());
    json!({ "summary": summary })
}

const NONE: &str = "(none)";

fn listed(slot: &str) -> Vec<&str> {
    slot.lines()
        .map(|l| l.trim().trim_start_matches("- ").trim())
        .filter(|l| !l.is_empty() && *l != NONE)
        .collect()
}

fn ensure_terminated(s: &str) -> String {
    let s = s.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_string()
    } else {
        format!("{s}.")
    }
}

fn heuristic_step_summary(transcript: &str, captions: &str, ocr: &str, diagrams: &str) -> Value {
    let speech = if transcript.trim() == NONE { Vec::new() } else { sentences(transcript) };
    let concise = speech
        .first()
        .map(|s| s.to_string())
        .or_else(|| listed(captions).first().map(|c| ensure_terminated(c)))
        .unwrap_or_else(|| "Carry out this step.".to_string());
    let mut verbose = vec![concise.clone()];
    let ocr = listed(ocr);
    if !ocr.is_empty() {
        verbose.push(format!("On screen: {}.", ocr.join(", ")));
    }
    if let Some(d) = listed(diagrams).first() {
        verbose.push(ensure_terminated(d));
    }
    if let Some(s) = speech.get(1) {
        verbose.push(s.to_string());
    }
    verbose.truncate(3);
    json!({
        "concise": concise,
        "verbose": verbose.join(" "),
        "emoji": "📝",
        "highlights": [],
    })
}
