//! HTTP adapters for remote model services.
//!
//! Wire formats:
//!
//! - language model: OpenAI-compatible `chat/completions`; frames attached as PNG data URIs.
//! - embeddings: `POST {"modality": .., "text": ..}` or `{"modality": .., "image": "<base64 png>"}`,
//!   reply `{"embedding": [..]}`.
//! - depth: `POST {"image": "<base64 png>"}`, reply `{"width": w, "height": h, "depth": [..]}` row-major.
//! - transcription: `POST` a 16-bit PCM WAV body, reply `{"segments": [{"start", "end", "text"}]}`.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{CompletionRequest, DepthEstimator, Embedder, EmbeddingVector, LanguageModel, Modality, ProviderConfig, Transcriber};
use crate::error::{Capability, Error, Result};
use crate::ingest::{AudioTrack, FrameRecord, RawSegment};
use crate::media::ScalarMap;

/// Counting semaphore bounding in-flight requests per provider.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Shared transport: timeouts, bearer auth, retries and the concurrency gate.
pub struct HttpClient {
    config: ProviderConfig,
    capability: Capability,
    agent: ureq::Agent,
    gate: Gate,
    backoff: Duration,
}

enum Body<'a> {
    Json(&'a Value),
    Wav(&'a [u8]),
}

impl HttpClient {
    pub fn new(config: ProviderConfig, capability: Capability) -> Result<Self> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(Self {
            gate: Gate::new(config.parallelism),
            config,
            capability,
            agent,
            backoff: Duration::from_millis(250),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn token(&self) -> Option<String> {
        self.config
            .auth_env
            .as_ref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|t| !t.is_empty())
    }

    fn once(&self, url: &str, body: &Body<'_>) -> std::result::Result<Value, String> {
        let mut req = self.agent.post(url);
        if let Some(token) = self.token() {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let sent = match body {
            Body::Json(v) => req
                .header("Content-Type", "application/json")
                .send(serde_json::to_vec(v).expect("request serializes").as_slice()),
            Body::Wav(bytes) => req.header("Content-Type", "audio/wav").send(*bytes),
        };
        let mut resp = sent.map_err(|e| e.to_string())?;
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| format!("reply is not JSON: {e}"))
    }

    /// POST with up to `max_retries` retries; any failure surfaces as PROVIDER_FAILURE.
    fn post(&self, url: &str, body: Body<'_>) -> Result<Value> {
        let _permit = self.gate.acquire();
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.once(url, &body) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::debug!(capability = %self.capability, attempt, error = %e, "request failed");
                    last = e;
                }
            }
        }
        Err(Error::provider(self.capability, self.config.max_retries, last))
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::provider(self.capability, 0, message)
    }
}

fn png_base64(frame: &FrameRecord) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(frame.image.encode_png()?))
}

pub struct RemoteLanguageModel {
    http: HttpClient,
}

impl RemoteLanguageModel {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            http: HttpClient::new(config, Capability::VisionLanguage)?,
        })
    }
}

impl LanguageModel for RemoteLanguageModel {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let mut content = vec![json!({"type": "text", "text": request.rendered})];
        for frame in &request.images {
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{}", png_base64(frame)?)},
            }));
        }
        let body = json!({
            "model": self.http.config().model.clone().unwrap_or_default(),
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        });
        let reply = self.http.post(&self.http.config().endpoint, Body::Json(&body))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.http.fail("reply has no choices[0].message.content"))
    }
}

pub struct RemoteEmbedder {
    http: HttpClient,
    dim: usize,
}

impl RemoteEmbedder {
    /// `dim` is the dimension the service is declared to return; replies are checked against it.
    pub fn new(config: ProviderConfig, dim: usize) -> Result<Self> {
        Ok(Self {
            http: HttpClient::new(config, Capability::Embedding)?,
            dim,
        })
    }

    fn call(&self, body: Value, modality: Modality) -> Result<EmbeddingVector> {
        #[derive(Deserialize)]
        struct Reply {
            embedding: Vec<f64>,
        }
        let reply = self.http.post(&self.http.config().endpoint, Body::Json(&body))?;
        let r: Reply = serde_json::from_value(reply).map_err(|e| self.http.fail(e.to_string()))?;
        if r.embedding.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: r.embedding.len(),
            });
        }
        EmbeddingVector::new(r.embedding, modality).map_err(|e| self.http.fail(e.to_string()))
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self, _: Modality) -> usize {
        self.dim
    }

    fn embed_image(&self, frame: &FrameRecord, modality: Modality) -> Result<EmbeddingVector> {
        self.call(json!({"modality": modality.as_str(), "image": png_base64(frame)?}), modality)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.call(json!({"modality": Modality::JointText.as_str(), "text": text}), Modality::JointText)
    }
}

pub struct RemoteDepth {
    http: HttpClient,
}

impl RemoteDepth {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            http: HttpClient::new(config, Capability::Depth)?,
        })
    }
}

impl DepthEstimator for RemoteDepth {
    fn estimate(&self, frame: &FrameRecord) -> Result<ScalarMap> {
        #[derive(Deserialize)]
        struct Reply {
            width: u32,
            height: u32,
            depth: Vec<f64>,
        }
        let body = json!({"image": png_base64(frame)?});
        let reply = self.http.post(&self.http.config().endpoint, Body::Json(&body))?;
        let r: Reply = serde_json::from_value(reply).map_err(|e| self.http.fail(e.to_string()))?;
        Ok(ScalarMap {
            width: r.width,
            height: r.height,
            values: r.depth,
        })
    }
}

pub struct RemoteTranscriber {
    http: HttpClient,
}

impl RemoteTranscriber {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        Ok(Self {
            http: HttpClient::new(config, Capability::Transcription)?,
        })
    }
}

impl Transcriber for RemoteTranscriber {
    fn transcribe(&self, audio: &AudioTrack) -> Result<Vec<RawSegment>> {
        #[derive(Deserialize)]
        struct Segment {
            start: f64,
            end: f64,
            text: String,
        }
        #[derive(Deserialize)]
        struct Reply {
            segments: Vec<Segment>,
        }
        let wav = audio.to_wav();
        let reply = self.http.post(&self.http.config().endpoint, Body::Wav(&wav))?;
        let r: Reply = serde_json::from_value(reply).map_err(|e| self.http.fail(e.to_string()))?;
        Ok(r.segments
            .into_iter()
            .map(|s| RawSegment {
                t_s: s.start,
                t_e: s.end,
                text: s.text,
            })
            .collect())
    }
}

/// Remote endpoints resolved from configuration, with environment variables taking precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemoteSettings {
    pub language: Option<ProviderConfig>,
    pub embedding: Option<ProviderConfig>,
    pub depth: Option<ProviderConfig>,
    pub transcription: Option<ProviderConfig>,
    pub embedding_dim: usize,
}

pub const ENV_VLM_URL: &str = "NOTEFORGE_VLM_URL";
pub const ENV_VLM_KEY: &str = "NOTEFORGE_VLM_KEY";
pub const ENV_EMBED_URL: &str = "NOTEFORGE_EMBED_URL";
pub const ENV_DEPTH_URL: &str = "NOTEFORGE_DEPTH_URL";
pub const ENV_ASR_URL: &str = "NOTEFORGE_ASR_URL";

fn overlay(env: &dyn Fn(&str) -> Option<String>, var: &str, base: Option<ProviderConfig>) -> Option<ProviderConfig> {
    match env(var).filter(|v| !v.is_empty()) {
        Some(url) => {
            let mut c = base.unwrap_or_default();
            c.endpoint = url;
            Some(c)
        }
        None => base,
    }
}

impl RemoteSettings {
    pub fn with_env(self) -> Self {
        self.with_lookup(&|k| std::env::var(k).ok())
    }

    pub fn with_lookup(self, env: &dyn Fn(&str) -> Option<String>) -> Self {
        let mut language = overlay(env, ENV_VLM_URL, self.language);
        if let Some(c) = language.as_mut() {
            if c.auth_env.is_none() && env(ENV_VLM_KEY).is_some() {
                c.auth_env = Some(ENV_VLM_KEY.to_string());
            }
        }
        Self {
            language,
            embedding: overlay(env, ENV_EMBED_URL, self.embedding),
            depth: overlay(env, ENV_DEPTH_URL, self.depth),
            transcription: overlay(env, ENV_ASR_URL, self.transcription),
            embedding_dim: self.embedding_dim,
        }
    }

    /// Swap in a remote adapter for every configured capability, keeping `base` for the rest.
    pub fn apply(&self, base: super::Providers) -> Result<super::Providers> {
        let mut p = base;
        if let Some(c) = &self.language {
            p.language = Arc::new(RemoteLanguageModel::new(c.clone())?);
        }
        if let Some(c) = &self.embedding {
            if self.embedding_dim < 1 {
                return Err(Error::Config("remote embeddings need a positive embedding_dim".into()));
            }
            p.embedder = Arc::new(RemoteEmbedder::new(c.clone(), self.embedding_dim)?);
        }
        if let Some(c) = &self.depth {
            p.depth = Arc::new(RemoteDepth::new(c.clone())?);
        }
        if let Some(c) = &self.transcription {
            p.transcriber = Arc::new(RemoteTranscriber::new(c.clone())?);
        }
        Ok(super::Providers::new(p.embedder, p.language, p.depth, p.transcriber).with_templates((*p.templates).clone()))
    }

    pub fn is_empty(&self) -> bool {
        self.language.is_none() && self.embedding.is_none() && self.depth.is_none() && self.transcription.is_none()
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::media::Raster;
    use crate::providers::prompt::TemplateSet;

    /// Serve `replies` in order (status, body), one connection each; returns the URL and request bodies.
    fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let (seen2, hits2) = (seen.clone(), hits.clone());
        std::thread::spawn(move || {
            for (status, body) in replies {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                seen2.lock().unwrap().push(String::from_utf8_lossy(&buf).into_owned());
                hits2.fetch_add(1, Ordering::SeqCst);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (url, seen, hits)
    }

    fn config(url: &str, retries: u32) -> ProviderConfig {
        ProviderConfig {
            endpoint: url.to_string(),
            timeout_secs: 5.0,
            max_retries: retries,
            ..Default::default()
        }
    }

    #[test]
    fn chat_completion_round_trip() {
        let reply = json!({"choices": [{"message": {"content": "{\"summary\": \"Hi.\"}"}}]}).to_string();
        let (url, seen, _) = stub(vec![(200, reply)]);
        let lm = RemoteLanguageModel::new(config(&url, 0)).unwrap();
        let set = TemplateSet::builtin();
        let p = set.prompt("summarize_chapter").unwrap().set("scope", "chapter:1").set("content", "x");
        let frame = FrameRecord::new(0, 0.0, Raster::solid(4, 4, [1, 2, 3]));
        let req = CompletionRequest {
            prompt: &p,
            rendered: set.render(&p).unwrap(),
            images: vec![&frame],
            attempt: 0,
            repair_note: None,
        };
        assert_eq!(lm.complete(&req).unwrap(), "{\"summary\": \"Hi.\"}");
        let body: Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        let url = body.pointer("/messages/0/content/1/image_url/url").unwrap().as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }

    #[test]
    fn retries_then_reports_count() {
        let (url, _, hits) = stub(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let mut client = HttpClient::new(config(&url, 2), Capability::Embedding).unwrap();
        client.backoff = Duration::from_millis(1);
        let err = client.post(&url, Body::Json(&json!({}))).unwrap_err();
        assert_eq!(err.code(), "PROVIDER_FAILURE");
        assert!(matches!(err, Error::Provider { retries: 2, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_recovers() {
        let (url, _, _) = stub(vec![(503, "{}".into()), (200, json!({"embedding": [1.0, 0.0, 0.0]}).to_string())]);
        let mut e = RemoteEmbedder::new(config(&url, 1), 3).unwrap();
        e.http.backoff = Duration::from_millis(1);
        let v = e.embed_text("hello").unwrap();
        assert_eq!(v.values, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let (url, _, _) = stub(vec![(200, json!({"embedding": [1.0, 0.0]}).to_string())]);
        let e = RemoteEmbedder::new(config(&url, 0), 3).unwrap();
        assert!(matches!(e.embed_text("x"), Err(Error::DimMismatch { expected: 3, actual: 2 })));
    }

    #[test]
    fn transcription_parses_segments() {
        let reply = json!({"segments": [{"start": 0.0, "end": 1.5, "text": " Hello. "}]}).to_string();
        let (url, _, _) = stub(vec![(200, reply)]);
        let t = RemoteTranscriber::new(config(&url, 0)).unwrap();
        let audio = AudioTrack {
            sample_rate: 8000,
            samples: vec![0i16; 8000].into(),
            source_uri: "x".into(),
        };
        let segs = t.transcribe(&audio).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].t_e, 1.5);
    }

    #[test]
    fn env_overrides_endpoints() {
        let env = |k: &str| match k {
            ENV_VLM_URL => Some("http://vlm".to_string()),
            ENV_VLM_KEY => Some("secret".to_string()),
            ENV_ASR_URL => Some("http://asr".to_string()),
            _ => None,
        };
        let s = RemoteSettings::default().with_lookup(&env);
        assert_eq!(s.language.as_ref().unwrap().endpoint, "http://vlm");
        assert_eq!(s.language.as_ref().unwrap().auth_env.as_deref(), Some(ENV_VLM_KEY));
        assert_eq!(s.transcription.unwrap().endpoint, "http://asr");
        assert!(s.embedding.is_none());
    }

    #[test]
    fn gate_bounds_concurrency() {
        let gate = Arc::new(Gate::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (gate, active, peak) = (gate.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = gate.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
