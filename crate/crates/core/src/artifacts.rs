//! Write-once artifact store backed by a directory.
//!
//! Each artifact is a content file `<id>.<ext>` plus a `<id>.meta.json`
//! sidecar, so a store reopened over the same directory sees earlier
//! artifacts.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact not found: {0}")]
    NotFound(String),
    #[error("artifact i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt artifact metadata {path}: {message}")]
    Metadata { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    SvgImage,
    MarkdownTable,
    PlanFile,
}

impl ArtifactKind {
    pub fn extension(self) -> &'static str {
        match self {
            ArtifactKind::SvgImage => "svg",
            ArtifactKind::MarkdownTable => "md",
            ArtifactKind::PlanFile => "json",
        }
    }

    pub fn media_type(self) -> &'static str {
        match self {
            ArtifactKind::SvgImage => "image/svg+xml",
            ArtifactKind::MarkdownTable => "text/markdown; charset=utf-8",
            ArtifactKind::PlanFile => "application/json",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::SvgImage => "svg_image",
            ArtifactKind::MarkdownTable => "markdown_table",
            ArtifactKind::PlanFile => "plan_file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub artifact_id: String,
    pub kind: ArtifactKind,
    pub path: PathBuf,
    pub created_at: DateTime<Utc>,
    pub title: String,
}

#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    counter: AtomicU64,
    index: RwLock<HashMap<String, Artifact>>,
}

impl ArtifactStore {
    /// Opens (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ArtifactError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut index = HashMap::new();
        let mut max_seq = 0u64;
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if !name.ends_with(".meta.json") {
                continue;
            }
            let raw = std::fs::read_to_string(&path)?;
            let art: Artifact = serde_json::from_str(&raw).map_err(|e| ArtifactError::Metadata {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if let Some(seq) = parse_seq(&art.artifact_id) {
                max_seq = max_seq.max(seq);
            }
            index.insert(art.artifact_id.clone(), art);
        }
        Ok(Self {
            dir,
            counter: AtomicU64::new(max_seq),
            index: RwLock::new(index),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn store(&self, kind: ArtifactKind, bytes: &[u8], title: &str) -> Result<Artifact, ArtifactError> {
        let seq = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let suffix: u32 = rand::random();
        let artifact_id = format!("a{seq:06}-{suffix:08x}");
        let path = self.dir.join(format!("{artifact_id}.{}", kind.extension()));
        let mut f = std::fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        let art = Artifact {
            artifact_id: artifact_id.clone(),
            kind,
            path,
            created_at: Utc::now(),
            title: title.to_string(),
        };
        let meta = serde_json::to_vec_pretty(&art).expect("artifact metadata serializes");
        std::fs::write(self.dir.join(format!("{artifact_id}.meta.json")), meta)?;
        self.index
            .write()
            .expect("artifact index poisoned")
            .insert(artifact_id, art.clone());
        Ok(art)
    }

    pub fn get(&self, artifact_id: &str) -> Result<Artifact, ArtifactError> {
        self.index
            .read()
            .expect("artifact index poisoned")
            .get(artifact_id)
            .cloned()
            .ok_or_else(|| ArtifactError::NotFound(artifact_id.to_string()))
    }

    pub fn read_bytes(&self, artifact_id: &str) -> Result<(Artifact, Vec<u8>), ArtifactError> {
        let art = self.get(artifact_id)?;
        let bytes = std::fs::read(&art.path)?;
        Ok((art, bytes))
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("artifact index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_seq(id: &str) -> Option<u64> {
    id.strip_prefix('a')?.split('-').next()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let a = store.store(ArtifactKind::MarkdownTable, b"| a |\n", "t").unwrap();
        assert_eq!(store.get(&a.artifact_id).unwrap(), a);
        assert!(a.path.exists());
        assert_eq!(std::fs::read(&a.path).unwrap(), b"| a |\n");
    }

    #[test]
    fn unknown_id_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        assert!(matches!(store.get("a000001-deadbeef"), Err(ArtifactError::NotFound(_))));
    }

    #[test]
    fn identical_bytes_get_distinct_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::open(dir.path()).unwrap();
        let a = store.store(ArtifactKind::SvgImage, b"<svg/>", "x").unwrap();
        let b = store.store(ArtifactKind::SvgImage, b"<svg/>", "x").unwrap();
        assert_ne!(a.artifact_id, b.artifact_id);
        assert_ne!(a.path, b.path);
    }

    #[test]
    fn reopen_sees_previous_artifacts_and_keeps_counting() {
        let dir = tempfile::tempdir().unwrap();
        let first = {
            let store = ArtifactStore::open(dir.path()).unwrap();
            store.store(ArtifactKind::PlanFile, b"{}", "plan").unwrap()
        };
        let store = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(store.get(&first.artifact_id).unwrap(), first);
        let second = store.store(ArtifactKind::PlanFile, b"{}", "plan").unwrap();
        assert!(second.artifact_id.starts_with("a000002-"));
    }

    #[test]
    fn concurrent_writers_allocate_unique_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = std::sync::Arc::new(ArtifactStore::open(dir.path()).unwrap());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let s = store.clone();
                std::thread::spawn(move || {
                    (0..10)
                        .map(|_| s.store(ArtifactKind::SvgImage, b"<svg/>", "c").unwrap().artifact_id)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut ids: Vec<String> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 80);
        assert_eq!(store.len(), 80);
    }
}
