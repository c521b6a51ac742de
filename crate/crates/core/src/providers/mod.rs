//! Model capabilities behind uniform contracts.
//!
//! Every capability has a deterministic mock (fixture tables plus seeded
//! hashing) and a remote HTTP adapter. Pipeline code only sees [`Providers`].

pub mod mock;
pub mod prompt;
pub mod remote;
pub mod schema;
mod structured;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use prompt::{StructuredPrompt, TemplateSet};
pub use structured::{Detection, DetectionHit};

use crate::error::{Capability, Error, Result};
use crate::ingest::{AudioTrack, FrameRecord, RawSegment};
use crate::media::ScalarMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    SemanticImage,
    VisualImage,
    JointText,
    JointImage,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::SemanticImage,
        Modality::VisualImage,
        Modality::JointText,
        Modality::JointImage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::SemanticImage => "semantic_image",
            Modality::VisualImage => "visual_image",
            Modality::JointText => "joint_text",
            Modality::JointImage => "joint_image",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub modality: Modality,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, modality: Modality) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding must have positive dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding contains non-finite values".into()));
        }
        Ok(Self { values, modality })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Endpoint settings for one remote capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub parallelism: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            auth_env: None,
            model: None,
            timeout_secs: 60.0,
            max_retries: 2,
            parallelism: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("provider timeout must be positive".into()));
        }
        if self.parallelism < 1 {
            return Err(Error::Config("provider parallelism must be at least 1".into()));
        }
        if self.endpoint.is_empty() {
            return Err(Error::Config("provider endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Request handed to a language model: the rendered prompt plus attachments.
#[derive(Debug, Clone)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a StructuredPrompt,
    pub rendered: String,
    pub images: Vec<&'a FrameRecord>,
    /// 0 for the first attempt, 1 for the schema-repair re-ask.
    pub attempt: u32,
    pub repair_note: Option<String>,
}

pub trait Embedder: Send + Sync {
    fn dim(&self, modality: Modality) -> usize;
    fn embed_image(&self, frame: &FrameRecord, modality: Modality) -> Result<EmbeddingVector>;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String>;
}

pub trait DepthEstimator: Send + Sync {
    fn estimate(&self, frame: &FrameRecord) -> Result<ScalarMap>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio: &AudioTrack) -> Result<Vec<RawSegment>>;
}

/// Remembers the first dimension seen per modality and rejects changes.
#[derive(Debug, Default)]
struct DimGuard(Mutex<HashMap<Modality, usize>>);

impl DimGuard {
    fn check(&self, v: &EmbeddingVector) -> Result<()> {
        let mut seen = self.0.lock().expect("dim guard poisoned");
        let expected = *seen.entry(v.modality).or_insert(v.dim());
        if expected != v.dim() {
            return Err(Error::DimMismatch {
                expected,
                actual: v.dim(),
            });
        }
        Ok(())
    }
}

/// The full set of capabilities a pipeline run uses.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub language: Arc<dyn LanguageModel>,
    pub depth: Arc<dyn DepthEstimator>,
    pub transcriber: Arc<dyn Transcriber>,
    pub templates: Arc<TemplateSet>,
    dims: Arc<DimGuard>,
}

impl Providers {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        language: Arc<dyn LanguageModel>,
        depth: Arc<dyn DepthEstimator>,
        transcriber: Arc<dyn Transcriber>,
    ) -> Self {
        Self {
            embedder,
            language,
            depth,
            transcriber,
            templates: Arc::new(TemplateSet::builtin()),
            dims: Arc::new(DimGuard::default()),
        }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    /// Deterministic providers from a fixture directory (or built-in defaults).
    pub fn mock(tables: mock::MockTables, seed: u64) -> Self {
        let tables = Arc::new(tables);
        Self::new(
            Arc::new(mock::MockEmbedder::new(tables.clone(), seed)),
            Arc::new(mock::MockLanguageModel::new(tables.clone())),
            Arc::new(mock::MockDepth),
            Arc::new(mock::MockTranscriber::new(tables)),
        )
    }

    fn embed_checked(&self, v: Result<EmbeddingVector>, modality: Modality) -> Result<EmbeddingVector> {
        let v = v?;
        if v.modality != modality {
            return Err(Error::provider(
                Capability::Embedding,
                0,
                format!("asked for {} got {}", modality.as_str(), v.modality.as_str()),
            ));
        }
        self.dims.check(&v)?;
        Ok(v)
    }

    pub fn semantic_embed(&self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        let m = Modality::SemanticImage;
        self.embed_checked(self.embedder.embed_image(frame, m), m)
    }

    pub fn visual_embed(&self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        let m = Modality::VisualImage;
        self.embed_checked(self.embedder.embed_image(frame, m), m)
    }

    pub fn joint_embed_image(&self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        let m = Modality::JointImage;
        self.embed_checked(self.embedder.embed_image(frame, m), m)
    }

    pub fn joint_embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_checked(self.embedder.embed_text(text), Modality::JointText)
    }

    /// Depth map validated to match the frame and lie in `[0, 1]`.
    pub fn estimate_depth(&self, frame: &FrameRecord) -> Result<ScalarMap> {
        let map = self.depth.estimate(frame)?;
        if map.width != frame.image.width()
            || map.height != frame.image.height()
            || map.values.len() != map.width as usize * map.height as usize
        {
            return Err(Error::provider(
                Capability::Depth,
                0,
                format!(
                    "depth map {}x{} ({} values) does not match frame {}x{}",
                    map.width,
                    map.height,
                    map.values.len(),
                    frame.image.width(),
                    frame.image.height()
                ),
            ));
        }
        if map.values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::provider(
                Capability::Depth,
                0,
                "depth map contains values outside [0,1] or non-finite values",
            ));
        }
        Ok(map)
    }
}

/// Cosine similarity; lives here so providers and consumers share one definition.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Raster;

    struct Shifty(std::sync::atomic::AtomicUsize);

    impl Embedder for Shifty {
        fn dim(&self, _: Modality) -> usize {
            8
        }
        fn embed_image(&self, _: &FrameRecord, m: Modality) -> Result<EmbeddingVector> {
            let n = self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            EmbeddingVector::new(vec![1.0; 8 + n], m)
        }
        fn embed_text(&self, _: &str) -> Result<EmbeddingVector> {
            EmbeddingVector::new(vec![1.0; 8], Modality::JointText)
        }
    }

    #[test]
    fn dimension_change_mid_run_is_rejected() {
        let base = Providers::mock(mock::MockTables::default(), 1);
        let p = Providers::new(
            Arc::new(Shifty(Default::default())),
            base.language.clone(),
            base.depth.clone(),
            base.transcriber.clone(),
        );
        let f = FrameRecord::new(0, 0.0, Raster::solid(4, 4, [1, 2, 3]));
        p.semantic_embed(&f).unwrap();
        assert!(matches!(p.semantic_embed(&f), Err(Error::DimMismatch { expected: 8, actual: 9 })));
    }

    struct BadDepth;
    impl DepthEstimator for BadDepth {
        fn estimate(&self, frame: &FrameRecord) -> Result<ScalarMap> {
            let mut values = vec![0.5; (frame.image.width() * frame.image.height()) as usize];
            values[0] = f64::NAN;
            Ok(ScalarMap {
                width: frame.image.width(),
                height: frame.image.height(),
                values,
            })
        }
    }

    #[test]
    fn non_finite_depth_is_provider_failure() {
        let base = Providers::mock(mock::MockTables::default(), 1);
        let p = Providers::new(base.embedder.clone(), base.language.clone(), Arc::new(BadDepth), base.transcriber.clone());
        let f = FrameRecord::new(0, 0.0, Raster::solid(4, 4, [1, 2, 3]));
        assert_eq!(p.estimate_depth(&f).unwrap_err().code(), "PROVIDER_FAILURE");
    }

    #[test]
    fn config_validation() {
        let mut c = ProviderConfig {
            endpoint: "http://x".into(),
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        c.parallelism = 0;
        assert!(c.validate().is_err());
        c.parallelism = 1;
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
    }
}
