use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use noteforge_core::pipeline::{self, write_atomic, Stage};
use noteforge_core::{Config, Error, Result};
use serde::{Deserialize, Serialize};

pub const STATUS_FILE: &str = "status.json";
pub const UPLOAD_DIR: &str = "source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub source_uri: String,
    pub status: Stage,
    /// Unix seconds at which each stage was entered.
    pub stage_times: BTreeMap<Stage, f64>,
    pub warnings: Vec<String>,
    pub error: Option<JobError>,
    pub config: Config,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl JobStatus {
    pub fn new(job_id: String, source_uri: String, config: Config) -> Self {
        Self {
            job_id,
            source_uri,
            status: Stage::Queued,
            stage_times: BTreeMap::from([(Stage::Queued, now())]),
            warnings: Vec::new(),
            error: None,
            config,
        }
    }

    pub fn advance(&mut self, next: Stage) {
        if self.status.can_advance_to(next) {
            self.status = next;
            self.stage_times.insert(next, now());
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(STATUS_FILE))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("corrupt job status: {e}")))
    }

    pub fn store(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("status serializes");
        write_atomic(&dir.join(STATUS_FILE), text.as_bytes())
    }
}

/// Ids are server-generated UUIDs; anything else never names a job directory.
pub fn valid_job_id(id: &str) -> bool {
    uuid::Uuid::try_parse(id).is_ok_and(|u| u.hyphenated().to_string() == id)
}

pub fn new_job_id() -> String {
    uuid::Uuid::new_v4().hyphenated().to_string()
}

/// Keep a plain file name from an upload hint.
pub fn upload_name(hint: Option<&str>) -> String {
    let name: String = hint
        .and_then(|h| h.rsplit(['/', '\\']).next())
        .unwrap_or("")
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'))
        .collect();
    let name = name.trim_start_matches('.');
    if name.is_empty() {
        "upload.bin".into()
    } else {
        name.into()
    }
}

/// Run the pipeline for a queued job, recording each stage in its status file.
pub fn run_job(dir: PathBuf, mock: bool) {
    let mut status = match JobStatus::load(&dir) {
        Ok(s) => s,
        Err(e) => {
            tracing::error!("job at {}: {e}", dir.display());
            return;
        }
    };
    let result = (|| -> Result<_> {
        let providers = pipeline::build_providers(&status.config, mock, Some(&status.source_uri))?;
        let config = status.config.clone();
        let source = status.source_uri.clone();
        pipeline::run(&config, &providers, &source, &dir, &mut |stage| {
            // DONE is recorded below together with the warnings.
            if stage != Stage::Done {
                status.advance(stage);
                if let Err(e) = status.store(&dir) {
                    tracing::warn!("job {}: status write failed: {e}", status.job_id);
                }
            }
        })
    })();
    match result {
        Ok(out) => {
            status.warnings = out.warnings.into_vec();
            status.advance(Stage::Done);
        }
        Err(e) => {
            tracing::warn!("job {} failed: {e}", status.job_id);
            status.error = Some(JobError {
                code: e.code().to_string(),
                message: e.to_string(),
            });
            status.advance(Stage::Failed);
        }
    }
    if let Err(e) = status.store(&dir) {
        tracing::error!("job {}: final status write failed: {e}", status.job_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_names() {
        let id = new_job_id();
        assert!(valid_job_id(&id));
        assert!(!valid_job_id("../etc"));
        assert!(!valid_job_id(&id.to_uppercase()));
        assert_eq!(upload_name(Some("../../a b/clip.nfv")), "clip.nfv");
        assert_eq!(upload_name(Some("...")), "upload.bin");
        assert_eq!(upload_name(None), "upload.bin");
    }

    #[test]
    fn advance_is_forward_only() {
        let mut s = JobStatus::new("x".into(), "y".into(), Config::default());
        s.advance(Stage::Keyinfo);
        s.advance(Stage::Parsing);
        assert_eq!(s.status, Stage::Keyinfo);
        s.advance(Stage::Failed);
        s.advance(Stage::Done);
        assert_eq!(s.status, Stage::Failed);
        assert_eq!(s.stage_times.len(), 3);
    }
}
