//! End-to-end job: ingest, structure, key information, notes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dedup::{select_keyframes, DedupResult};
use crate::error::{Error, Result, Warnings};
use crate::ingest::{self, FrameRecord, MediaInfo, TranscriptSegment};
use crate::keyinfo::dynamic::{detect_dynamic_keyframes, DynamicKeyframe};
use crate::keyinfo::{plan_static_subtasks, run_static_extraction, StaticAnnotation};
use crate::notegen::gif::assemble_gif;
use crate::notegen::scheme::{q3, SchemeParts};
use crate::notegen::summary::{ChapterSummary, FLAG_EMPTY_CONTENT};
use crate::notegen::{assemble_scheme, retrieve_thumbnail, summarize_chapter, summarize_step, AssetStore, KeyFrameAnnotation, NoteScheme, VideoMeta};
use crate::par;
use crate::providers::mock::MockTables;
use crate::providers::prompt::TemplateSet;
use crate::providers::remote::RemoteSettings;
use crate::providers::Providers;
use crate::render::canonical::{serialize_scheme, to_canonical};
use crate::structure::{build_hierarchy, caption_keyframes, DifferentialCaption, HierarchicalTranscript};

pub const ENV_MOCK_DIR: &str = "NOTEFORGE_MOCK_DIR";
/// File marking a directory as a mock table set.
pub const MOCK_MARKER: &str = "mock.json";

pub const SCHEME_FILE: &str = "scheme.json";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const HIERARCHY_FILE: &str = "hierarchy.json";
pub const WARNINGS_FILE: &str = "warnings.json";
pub const ASSETS_DIR: &str = "assets";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Queued,
    Parsing,
    Structuring,
    Keyinfo,
    Notegen,
    Done,
    Failed,
}

impl Stage {
    pub const ORDER: [Stage; 6] = [Stage::Queued, Stage::Parsing, Stage::Structuring, Stage::Keyinfo, Stage::Notegen, Stage::Done];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Queued => "QUEUED",
            Stage::Parsing => "PARSING",
            Stage::Structuring => "STRUCTURING",
            Stage::Keyinfo => "KEYINFO",
            Stage::Notegen => "NOTEGEN",
            Stage::Done => "DONE",
            Stage::Failed => "FAILED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }

    /// Forward moves only; FAILED from any active stage.
    pub fn can_advance_to(self, next: Stage) -> bool {
        match (self, next) {
            (s, _) if s.is_terminal() => false,
            (_, Stage::Failed) => true,
            (a, b) => a < b,
        }
    }
}

/// Mock tables from the configured directory, `NOTEFORGE_MOCK_DIR`, or the source's directory when it holds a table set.
pub fn resolve_mock_dir(config: &Config, source: Option<&str>) -> Option<PathBuf> {
    if let Some(d) = &config.mock_dir {
        return Some(d.clone());
    }
    if let Some(d) = std::env::var_os(ENV_MOCK_DIR).filter(|v| !v.is_empty()) {
        return Some(PathBuf::from(d));
    }
    let parent = Path::new(source?).parent()?;
    let parent = if parent.as_os_str().is_empty() { Path::new(".") } else { parent };
    parent.join(MOCK_MARKER).is_file().then(|| parent.to_path_buf())
}

/// Mock providers when `mock`, otherwise remote adapters for every capability.
pub fn build_providers(config: &Config, mock: bool, source: Option<&str>) -> Result<Providers> {
    let templates = match &config.templates_dir {
        Some(dir) => TemplateSet::with_overrides(dir)?,
        None => TemplateSet::builtin(),
    };
    let tables = match resolve_mock_dir(config, source) {
        Some(dir) if mock => MockTables::load(&dir)?,
        _ => MockTables::default(),
    };
    let base = Providers::mock(tables, config.seed).with_templates(templates);
    if mock {
        return Ok(base);
    }
    let remote: RemoteSettings = config.providers.remote().with_env();
    let missing: Vec<&str> = [
        ("language", remote.language.is_none()),
        ("embedding", remote.embedding.is_none()),
        ("depth", remote.depth.is_none()),
        ("transcription", remote.transcription.is_none()),
    ]
    .into_iter()
    .filter_map(|(n, m)| m.then_some(n))
    .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "no endpoint for: {} (set them in the config file or environment, or use mock providers)",
            missing.join(", ")
        )));
    }
    remote.apply(base)
}

/// Sampled frames and transcript.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub info: MediaInfo,
    pub frames: Vec<FrameRecord>,
    pub transcript: Vec<TranscriptSegment>,
}

pub fn parse_source(config: &Config, providers: &Providers, source: &str, warnings: &mut Warnings) -> Result<Parsed> {
    let exec = config.exec();
    let mut decoder = ingest::open(source)?;
    let info = decoder.info().clone();
    let mut rate = config.sample_rate;
    if rate > info.native_fps {
        warnings.push(format!("sample rate {rate} exceeds the native {} fps; using the native rate", info.native_fps));
        rate = info.native_fps;
    }
    let frames = ingest::sample_frames_with(decoder.as_mut(), rate, exec)?;
    let transcript = match ingest::extract_audio(decoder.as_mut()) {
        Ok(track) if track.is_silent() => {
            warnings.push("audio track is silent; continuing without a transcript");
            Vec::new()
        }
        Ok(track) => {
            let (t, w) = ingest::transcribe(providers.transcriber.as_ref(), &track)?;
            warnings.extend(w);
            t
        }
        Err(Error::NoAudioTrack) => {
            warnings.push("no audio track; continuing without a transcript");
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    Ok(Parsed { info, frames, transcript })
}

#[derive(Debug, Clone)]
pub struct Structured {
    pub dedup: DedupResult,
    pub captions: Vec<DifferentialCaption>,
    pub hierarchy: HierarchicalTranscript,
}

pub fn structure(config: &Config, providers: &Providers, parsed: &Parsed, warnings: &mut Warnings) -> Result<Structured> {
    let exec = config.exec();
    let dedup = select_keyframes(providers, &parsed.frames, &config.dedup, exec)?;
    let (captions, w) = caption_keyframes(providers, &dedup.keyframes, &parsed.frames, &parsed.transcript, exec)?;
    warnings.extend(w);
    let (hierarchy, w) = build_hierarchy(providers, &captions, &parsed.transcript, parsed.info.duration)?;
    warnings.extend(w);
    Ok(Structured { dedup, captions, hierarchy })
}

#[derive(Debug, Clone)]
pub struct KeyInfo {
    pub annotations: Vec<StaticAnnotation>,
    pub dynamic: Vec<DynamicKeyframe>,
}

pub fn key_information(
    config: &Config,
    providers: &Providers,
    parsed: &Parsed,
    keyframes: &[usize],
    warnings: &mut Warnings,
) -> Result<KeyInfo> {
    let exec = config.exec();
    let query = if config.query.trim().is_empty() {
        parsed.info.title.clone()
    } else {
        config.query.clone()
    };
    let query = if query.trim().is_empty() { "instructional video".to_string() } else { query };
    let (plan, w) = plan_static_subtasks(providers, &query)?;
    warnings.extend(w);
    let frames: Vec<&FrameRecord> = keyframes.iter().map(|&i| &parsed.frames[i]).collect();
    let (annotations, w) = run_static_extraction(providers, &frames, &parsed.transcript, &plan, exec);
    warnings.extend(w);
    let (dynamic, w) = detect_dynamic_keyframes(providers, &parsed.frames, &config.dynamic, exec);
    warnings.extend(w);
    Ok(KeyInfo { annotations, dynamic })
}

/// Position of the step a timestamp attaches to: the last step starting at or before it.
fn step_slot(starts: &[f64], t: f64) -> Option<usize> {
    let t = q3(t);
    starts.iter().rposition(|s| q3(*s) <= t)
}

fn ensure_sentence(s: &str) -> String {
    let s = s.trim();
    if s.is_empty() {
        "Overview of this part.".into()
    } else if s.ends_with(['.', '!', '?']) {
        s.into()
    } else {
        format!("{s}.")
    }
}

pub fn compile_notes(
    config: &Config,
    providers: &Providers,
    parsed: &Parsed,
    structured: &Structured,
    keyinfo: &KeyInfo,
    store: &AssetStore,
    warnings: &mut Warnings,
) -> Result<NoteScheme> {
    let exec = config.exec();
    let h = &structured.hierarchy;
    let frames = &parsed.frames;
    let n_chapters = h.chapters.len();

    let chapter_results = par::try_map(exec, &h.chapters, |c| match summarize_chapter(providers, c) {
        Ok(r) => Ok(r),
        Err(Error::EmptyContent(_)) => Ok((
            ChapterSummary {
                text: ensure_sentence(&c.title),
                flags: vec![FLAG_EMPTY_CONTENT.to_string()],
            },
            Warnings::new(),
        )),
        Err(e) => Err(e),
    })?;

    let steps: Vec<(usize, &crate::structure::Step)> =
        h.chapters.iter().enumerate().flat_map(|(ci, c)| c.steps.iter().map(move |s| (ci, s))).collect();
    let starts: Vec<f64> = steps.iter().map(|(_, s)| s.t_s).collect();
    let mut attached: Vec<Vec<&StaticAnnotation>> = vec![Vec::new(); steps.len()];
    for a in &keyinfo.annotations {
        if let Some(i) = step_slot(&starts, a.timestamp) {
            attached[i].push(a);
        }
    }
    let keyframe_frames: Vec<&FrameRecord> = structured.dedup.keyframes.indices.iter().map(|&i| &frames[i]).collect();
    let slots: Vec<usize> = (0..steps.len()).collect();
    let step_results = par::try_map(exec, &slots, |&i| -> Result<_> {
        let (_, s) = steps[i];
        let (summary, mut w) = summarize_step(providers, s, &attached[i])?;
        let (thumb, w2) = retrieve_thumbnail(providers, s.t_s, s.t_e, &summary.concise, &keyframe_frames, frames)?;
        w.extend(w2);
        Ok((summary, thumb, w))
    })?;

    let mut parts = SchemeParts::default();
    for (c, (summary, w)) in h.chapters.iter().zip(chapter_results) {
        warnings.extend(w);
        parts.chapter_summaries.insert(c.id, summary);
    }
    let png = |index: usize| -> Result<String> { store.put(&frames[index].image.encode_png()?, "png") };
    for ((_, s), (summary, mut thumb, w)) in steps.iter().zip(step_results) {
        warnings.extend(w);
        thumb.asset = png(thumb.frame_index)?;
        parts.step_summaries.insert(s.id, summary);
        parts.thumbnails.insert(s.id, thumb);
    }
    for (ci, c) in h.chapters.iter().enumerate() {
        let last = ci + 1 == n_chapters;
        if let Some((_, bytes)) = assemble_gif(&c.id.to_string(), frames, c.t_s, c.t_e, last)? {
            parts.chapter_gifs.insert(c.id, store.put(&bytes, "gif")?);
        }
        if config.notegen.step_gifs {
            for (si, s) in c.steps.iter().enumerate() {
                let closed = last && si + 1 == c.steps.len();
                if let Some((_, bytes)) = assemble_gif(&s.id.to_string(), frames, s.t_s, s.t_e, closed)? {
                    parts.step_gifs.insert(s.id, store.put(&bytes, "gif")?);
                }
            }
        }
    }
    for a in &keyinfo.annotations {
        parts.keyframes.push(KeyFrameAnnotation::from_static(a, png(a.frame_index)?));
    }
    for d in &keyinfo.dynamic {
        parts.keyframes.push(KeyFrameAnnotation::from_dynamic(d, png(d.post_frame)?));
    }
    let video = VideoMeta {
        title: parsed.info.title.clone(),
        duration: parsed.info.duration,
        source_uri: parsed.info.source_uri.clone(),
    };
    assemble_scheme(video, h, &parts, &|n| store.contains(n))
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub scheme: NoteScheme,
    pub transcript: Vec<TranscriptSegment>,
    pub hierarchy: HierarchicalTranscript,
    pub keyinfo: KeyInfo,
    pub warnings: Warnings,
}

/// Run every stage, writing assets under `out_dir/assets`; `on_stage` sees each stage as it starts.
pub fn run(config: &Config, providers: &Providers, source: &str, out_dir: &Path, on_stage: &mut dyn FnMut(Stage)) -> Result<JobOutput> {
    let store = AssetStore::open(out_dir.join(ASSETS_DIR))?;
    let mut warnings = Warnings::new();
    on_stage(Stage::Parsing);
    let parsed = parse_source(config, providers, source, &mut warnings)?;
    on_stage(Stage::Structuring);
    let structured = structure(config, providers, &parsed, &mut warnings)?;
    on_stage(Stage::Keyinfo);
    let keyinfo = key_information(config, providers, &parsed, &structured.dedup.keyframes.indices, &mut warnings)?;
    on_stage(Stage::Notegen);
    let scheme = compile_notes(config, providers, &parsed, &structured, &keyinfo, &store, &mut warnings)?;
    let out = JobOutput {
        scheme,
        transcript: parsed.transcript,
        hierarchy: structured.hierarchy,
        keyinfo,
        warnings,
    };
    write_outputs(out_dir, &out)?;
    on_stage(Stage::Done);
    Ok(out)
}

/// Write `contents` to `path` through a sibling temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    static SEQ: AtomicUsize = AtomicUsize::new(0);
    let n = SEQ.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_outputs(out_dir: &Path, out: &JobOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join(TRANSCRIPT_FILE), to_canonical(&out.transcript)?.as_bytes())?;
    write_atomic(&out_dir.join(HIERARCHY_FILE), to_canonical(&out.hierarchy)?.as_bytes())?;
    write_atomic(&out_dir.join(WARNINGS_FILE), to_canonical(&out.warnings.iter().collect::<Vec<_>>())?.as_bytes())?;
    write_atomic(&out_dir.join(SCHEME_FILE), serialize_scheme(&out.scheme).as_bytes())
}
