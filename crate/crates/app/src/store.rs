//! Append-only JSON-lines record log.
//!
//! Each line is one [`StoredRecord`]. Sequence numbers start at 1 and
//! increase by one per record. A final line without its newline is the
//! trace of an interrupted write: it is cut off on open with a warning.
//! Damage anywhere else is an error.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    DebunkResult,
    Rating,
    SessionEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub kind: RecordKind,
    pub payload: Value,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("store {path} line {line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
}

pub struct Store {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("path", &self.path)
            .field("next_seq", &self.next_seq)
            .finish()
    }
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Store {
    /// Opens or creates the log and returns every intact record in order,
    /// plus warnings about repaired damage.
    pub fn open(
        path: impl AsRef<Path>,
    ) -> Result<(Self, Vec<StoredRecord>, Vec<String>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;

        let mut records = Vec::new();
        let mut warnings = Vec::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (idx, line) in lines.iter().enumerate() {
            let complete = line.ends_with('\n');
            offset += line.len();
            if line.trim().is_empty() {
                if complete {
                    good_len = offset;
                }
                continue;
            }
            let corrupt = |reason: String| StoreError::Corrupt {
                path: path.display().to_string(),
                line: idx + 1,
                reason,
            };
            // Only the last line can lack its newline; a record counts once
            // its newline is on disk.
            if !complete {
                let msg = format!("dropped an incomplete final record at line {}", idx + 1);
                warn!(store = %path.display(), "{msg}");
                warnings.push(msg);
                continue;
            }
            let rec: StoredRecord =
                serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let expected = records.last().map_or(1, |r: &StoredRecord| r.seq + 1);
            if rec.seq != expected {
                return Err(corrupt(format!(
                    "sequence {} where {expected} was expected",
                    rec.seq
                )));
            }
            records.push(rec);
            good_len = offset;
        }
        if good_len < text.len() {
            file.set_len(good_len as u64).map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Ok((
            Self {
                path,
                file,
                next_seq,
            },
            records,
            warnings,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record as a single line and flushes it to the OS.
    pub fn append(&mut self, kind: RecordKind, payload: Value) -> Result<StoredRecord, StoreError> {
        let record = StoredRecord {
            seq: self.next_seq,
            timestamp: now_millis(),
            kind,
            payload,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.display().to_string(),
                source,
            })?;
        self.next_seq += 1;
        Ok(record)
    }
}
