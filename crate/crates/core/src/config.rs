//! Pipeline configuration loaded from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dedup::DedupConfig;
use crate::error::{Error, Result};
use crate::ingest::DEFAULT_SAMPLE_RATE;
use crate::keyinfo::dynamic::DynamicConfig;
use crate::par::Exec;
use crate::providers::remote::RemoteSettings;
use crate::providers::ProviderConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvidersSection {
    pub language: Option<ProviderConfig>,
    pub embedding: Option<ProviderConfig>,
    pub depth: Option<ProviderConfig>,
    pub transcription: Option<ProviderConfig>,
    /// Dimension remote embedders must return.
    pub embedding_dim: usize,
}

impl ProvidersSection {
    pub fn remote(&self) -> RemoteSettings {
        RemoteSettings {
            language: self.language.clone(),
            embedding: self.embedding.clone(),
            depth: self.depth.clone(),
            transcription: self.transcription.clone(),
            embedding_dim: self.embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotegenConfig {
    /// Also build step previews for interactable notes.
    pub step_gifs: bool,
}

impl Default for NotegenConfig {
    fn default() -> Self {
        Self { step_gifs: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub max_concurrent_jobs: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { max_concurrent_jobs: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Frames sampled per second of video.
    pub sample_rate: f64,
    /// Seed for mock embeddings.
    pub seed: u64,
    /// Task description handed to the static-information planner; the video title when empty.
    pub query: String,
    /// Use the data-parallel executor where available.
    pub parallel: bool,
    pub templates_dir: Option<PathBuf>,
    pub mock_dir: Option<PathBuf>,
    pub dedup: DedupConfig,
    pub dynamic: DynamicConfig,
    pub notegen: NotegenConfig,
    pub server: ServerConfig,
    pub providers: ProvidersSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed: 0,
            query: String::new(),
            parallel: true,
            templates_dir: None,
            mock_dir: None,
            dedup: DedupConfig::default(),
            dynamic: DynamicConfig::default(),
            notegen: NotegenConfig::default(),
            server: ServerConfig::default(),
            providers: ProvidersSection::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Load `path`; relative directories inside are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut c.templates_dir, &mut c.mock_dir].into_iter().flatten() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Config(format!("sample_rate = {} must be positive", self.sample_rate)));
        }
        unit("dedup.semantic_threshold", self.dedup.semantic_threshold)?;
        unit("dedup.visual_threshold", self.dedup.visual_threshold)?;
        unit("dynamic.scene_threshold", self.dynamic.scene_threshold)?;
        if self.server.max_concurrent_jobs < 1 {
            return Err(Error::Config("server.max_concurrent_jobs must be at least 1".into()));
        }
        for c in [&self.providers.language, &self.providers.embedding, &self.providers.depth, &self.providers.transcription]
            .into_iter()
            .flatten()
        {
            c.validate()?;
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::available()
        } else {
            Exec::Sequential
        }
    }
}
