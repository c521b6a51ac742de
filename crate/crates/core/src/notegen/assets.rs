//! Content-addressed asset directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::media::Digest;

#[derive(Debug, Clone)]
pub struct AssetStore {
    root: PathBuf,
}

impl AssetStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Store `bytes` as `<sha256>.<ext>` and return the name; existing content is left alone.
    pub fn put(&self, bytes: &[u8], ext: &str) -> Result<String> {
        let name = format!("{}.{ext}", Digest::of_bytes(bytes).hex());
        let path = self.root.join(&name);
        if !path.exists() {
            static SEQ: AtomicU64 = AtomicU64::new(0);
            let n = SEQ.fetch_add(1, Ordering::Relaxed);
            let tmp = self.root.join(format!(".{name}.{}.{n}.tmp", std::process::id()));
            std::fs::write(&tmp, bytes)?;
            std::fs::rename(&tmp, &path)?;
        }
        Ok(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        is_asset_name(name) && self.root.join(name).is_file()
    }

    pub fn read(&self, name: &str) -> Result<Vec<u8>> {
        if !self.contains(name) {
            return Err(Error::MissingAsset(name.to_string()));
        }
        Ok(std::fs::read(self.root.join(name))?)
    }

    /// Every stored asset name, sorted.
    pub fn names(&self) -> Result<Vec<String>> {
        let mut out: Vec<String> = std::fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| is_asset_name(n))
            .collect();
        out.sort();
        Ok(out)
    }
}

/// `<64 hex>.<ext>` with a short alphanumeric extension; rejects anything path-like.
pub fn is_asset_name(name: &str) -> bool {
    let Some((stem, ext)) = name.split_once('.') else { return false };
    stem.len() == 64
        && stem.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
        && !ext.is_empty()
        && ext.len() <= 8
        && ext.bytes().all(|b| b.is_ascii_alphanumeric())
}

pub fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}
