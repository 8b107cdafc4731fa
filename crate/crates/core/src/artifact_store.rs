//! Content-addressed artifact storage.
//!
//! Blobs live at `<root>/ab/cdef...` where `abcdef...` is the hex SHA-256 of
//! the content, with a JSON descriptor beside each blob. Writes go through a
//! temp file and an atomic rename, so a reader sees a whole blob or none.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("artifact content is empty")]
    EmptyContent,
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("artifact {id} failed its integrity check: {detail}")]
    IntegrityError { id: String, detail: String },
    #[error("artifact store I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub kind: String,
    pub size_bytes: u64,
    pub media_hint: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct ArtifactStore {
    root: PathBuf,
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_artifact_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl ArtifactStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("tmp"))?;
        Ok(ArtifactStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn blob_path(&self, id: &str) -> PathBuf {
        self.root.join(&id[..2]).join(&id[2..])
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.root.join(&id[..2]).join(format!("{}.json", &id[2..]))
    }

    fn write_atomic(&self, dest: &Path, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(self.root.join("tmp"))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_data()?;
        tmp.persist(dest).map_err(|e| e.error)?;
        Ok(())
    }

    /// Stores `bytes` once. Re-putting identical content returns the
    /// existing descriptor, including its original kind.
    pub fn put(&self, bytes: &[u8], kind: &str, media_hint: &str) -> Result<Artifact> {
        if bytes.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let id = digest_hex(bytes);
        if let Ok(existing) = self.stat(&id) {
            return Ok(existing);
        }
        fs::create_dir_all(self.root.join(&id[..2]))?;
        let artifact = Artifact {
            id: id.clone(),
            kind: kind.to_string(),
            size_bytes: bytes.len() as u64,
            media_hint: media_hint.to_string(),
            created_at: clock::now(),
        };
        // Blob first: a descriptor never points at a missing blob.
        self.write_atomic(&self.blob_path(&id), bytes)?;
        let meta = serde_json::to_vec_pretty(&artifact).expect("descriptor serializes");
        self.write_atomic(&self.meta_path(&id), &meta)?;
        Ok(artifact)
    }

    /// Returns the stored bytes after checking them against their digest.
    pub fn get(&self, id: &str) -> Result<Vec<u8>> {
        if !is_artifact_id(id) {
            return Err(StoreError::UnknownArtifact(id.to_string()));
        }
        let bytes = match fs::read(self.blob_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::UnknownArtifact(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let actual = digest_hex(&bytes);
        if actual != id {
            return Err(StoreError::IntegrityError {
                id: id.to_string(),
                detail: format!("content hashes to {actual}"),
            });
        }
        Ok(bytes)
    }

    pub fn stat(&self, id: &str) -> Result<Artifact> {
        if !is_artifact_id(id) {
            return Err(StoreError::UnknownArtifact(id.to_string()));
        }
        let raw = match fs::read(self.meta_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::UnknownArtifact(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&raw).map_err(|e| StoreError::IntegrityError {
            id: id.to_string(),
            detail: format!("descriptor: {e}"),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        is_artifact_id(id) && self.blob_path(id).is_file() && self.meta_path(id).is_file()
    }

    /// Descriptors, oldest first, optionally restricted to one kind.
    pub fn list(&self, kind: Option<&str>) -> Result<Vec<Artifact>> {
        let mut out = Vec::new();
        for shard in fs::read_dir(&self.root)? {
            let shard = shard?;
            let name = shard.file_name();
            let Some(prefix) = name.to_str().filter(|n| n.len() == 2) else {
                continue;
            };
            for entry in fs::read_dir(shard.path())? {
                let entry = entry?;
                let file = entry.file_name();
                let Some(rest) = file.to_str().and_then(|f| f.strip_suffix(".json")) else {
                    continue;
                };
                let artifact = self.stat(&format!("{prefix}{rest}"))?;
                if kind.is_none_or(|k| k == artifact.kind) {
                    out.push(artifact);
                }
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }
}
