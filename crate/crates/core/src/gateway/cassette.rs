//! Content-addressed record/replay of gateway traffic.
//!
//! A cassette maps `sha256(endpoint || canonical request JSON)` to the full
//! backend response. One cassette file holds one scenario. Replaying the
//! same inputs against the same cassette is bit-deterministic and never
//! touches the network.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use super::{Endpoint, GatewayError, Transport};

const FORMAT: &str = "gendebunk-cassette/1";

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cassette {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cassette {path}: unsupported format {found:?}")]
    Format { path: PathBuf, found: String },
}

/// Serializes `value` with object keys sorted at every level.
pub(crate) fn canonical_json(value: &Value) -> String {
    fn sorted(value: &Value) -> Value {
        match value {
            Value::Object(map) => {
                let ordered: BTreeMap<&String, Value> =
                    map.iter().map(|(k, v)| (k, sorted(v))).collect();
                Value::Object(ordered.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sorted).collect()),
            other => other.clone(),
        }
    }
    sorted(value).to_string()
}

/// Hex digest identifying a request body sent to `endpoint`.
pub fn request_digest(endpoint: Endpoint, body: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(endpoint.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(canonical_json(body).as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    pub endpoint: Endpoint,
    pub response: Value,
}

#[derive(Serialize, Deserialize)]
struct CassetteFile {
    format: String,
    entries: Vec<CassetteEntry>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: BTreeMap<String, CassetteEntry>,
    dirty: bool,
}

/// In-memory cassette, optionally bound to a file.
#[derive(Debug, Default)]
pub struct Cassette {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `path` for replay. The file must exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|source| CassetteError::Io {
            path: path.clone(),
            source,
        })?;
        let file: CassetteFile =
            serde_json::from_str(&text).map_err(|source| CassetteError::Parse {
                path: path.clone(),
                source,
            })?;
        if file.format != FORMAT {
            return Err(CassetteError::Format {
                path,
                found: file.format,
            });
        }
        let entries = file
            .entries
            .into_iter()
            .map(|e| (e.digest.clone(), e))
            .collect();
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Inner {
                entries,
                dirty: false,
            }),
        })
    }

    /// Opens `path` for recording, keeping existing entries if the file exists.
    pub fn create_or_extend(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref();
        if path.exists() {
            Self::open(path)
        } else {
            Ok(Self {
                path: Some(path.to_path_buf()),
                inner: Mutex::default(),
            })
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn get(&self, digest: &str) -> Option<CassetteEntry> {
        self.lock().entries.get(digest).cloned()
    }

    pub fn insert(&self, endpoint: Endpoint, body: &Value, response: Value) -> String {
        let digest = request_digest(endpoint, body);
        let mut inner = self.lock();
        inner.entries.insert(
            digest.clone(),
            CassetteEntry {
                digest: digest.clone(),
                endpoint,
                response,
            },
        );
        inner.dirty = true;
        digest
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.lock().entries.values().cloned().collect()
    }

    /// Serialized file form, entries ordered by digest.
    pub fn to_json(&self) -> String {
        let file = CassetteFile {
            format: FORMAT.to_string(),
            entries: self.entries(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("cassette serializes");
        text.push('\n');
        text
    }

    /// Writes the cassette to its file (if bound) via a temp file + rename.
    pub fn save(&self) -> Result<(), CassetteError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        // hold the lock for the whole write so concurrent saves serialize
        let mut inner = self.lock();
        let file = CassetteFile {
            format: FORMAT.to_string(),
            entries: inner.entries.values().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("cassette serializes");
        text.push('\n');
        let io_err = |source| CassetteError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)?;
        inner.dirty = false;
        Ok(())
    }
}

impl Drop for Cassette {
    fn drop(&mut self) {
        if self.lock().dirty {
            if let Err(e) = self.save() {
                warn!("failed to save cassette on drop: {e}");
            }
        }
    }
}

/// Forwards to a live transport and records every successful response.
#[derive(Debug)]
pub struct Recorder {
    inner: Arc<dyn Transport>,
    cassette: Arc<Cassette>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn Transport>, cassette: Arc<Cassette>) -> Self {
        Self { inner, cassette }
    }
}

impl Transport for Recorder {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        let response = self.inner.call(endpoint, body)?;
        self.cassette.insert(endpoint, body, response.clone());
        Ok(response)
    }
}

/// Serves responses from a cassette only.
#[derive(Debug, Clone)]
pub struct Replayer {
    cassette: Arc<Cassette>,
}

impl Replayer {
    pub fn new(cassette: Arc<Cassette>) -> Self {
        Self { cassette }
    }
}

impl Transport for Replayer {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        let digest = request_digest(endpoint, body);
        match self.cassette.get(&digest) {
            Some(entry) if entry.endpoint == endpoint => Ok(entry.response),
            _ => Err(GatewayError::ReplayMiss { endpoint, digest }),
        }
    }
}
