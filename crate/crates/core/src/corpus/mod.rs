//! The three corpora: gold exemplar debunkings, refuted claims with evidence
//! sentences, and test myths. Files are JSON lines, one record per line.

mod retrieval;

use std::collections::HashMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::sandwich::{validate_sandwich, TruthSandwich};
use crate::taxonomy::Fallacy;

pub use retrieval::{
    cosine_similarity, select_evidence, select_exemplar, select_exemplar_global, EmbeddingVector,
    EvidenceMatch, ExemplarMatch, RankedSentence, RetrievalError, VectorSource,
};

pub const EVIDENCE_PER_CLAIM: usize = 5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: claim {id:?} has {count} evidence sentences, expected 5")]
    WrongEvidenceCount {
        line: usize,
        id: String,
        count: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Exemplars,
    Evidence,
    Myths,
}

/// A myth to be debunked; test items carry a gold fallacy label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MythRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_fallacy: Option<Fallacy>,
}

/// A gold myth with its fallacy label and reference debunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarRecord {
    pub id: String,
    pub myth_text: String,
    pub fallacy: Fallacy,
    pub debunking: TruthSandwich,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSentence {
    pub text: String,
    pub source_id: String,
}

/// A refuted claim, its claim-category label and five evidence sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceClaim {
    pub id: String,
    pub claim_text: String,
    pub cards_label: String,
    pub evidence: Vec<EvidenceSentence>,
}

/// Record types that can live in a corpus file.
pub trait CorpusRecord: Serialize + DeserializeOwned + Clone {
    const KIND: CorpusKind;

    fn id(&self) -> &str;

    /// Checks invariants and normalizes derived fields.
    fn check(&mut self, line: usize) -> Result<(), CorpusError>;
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

impl CorpusRecord for MythRecord {
    const KIND: CorpusKind = CorpusKind::Myths;

    fn id(&self) -> &str {
        &self.id
    }

    fn check(&mut self, line: usize) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(malformed(line, "text is empty"));
        }
        Ok(())
    }
}

impl CorpusRecord for ExemplarRecord {
    const KIND: CorpusKind = CorpusKind::Exemplars;

    fn id(&self) -> &str {
        &self.id
    }

    fn check(&mut self, line: usize) -> Result<(), CorpusError> {
        if self.myth_text.trim().is_empty() {
            return Err(malformed(line, "myth_text is empty"));
        }
        self.debunking.refresh_counts();
        let report = validate_sandwich(&self.debunking);
        if !report.structure_valid {
            return Err(malformed(
                line,
                format!(
                    "debunking fails structure validation (missing {:?}, order {:?})",
                    report.missing_slots, report.order_violations
                ),
            ));
        }
        Ok(())
    }
}

impl CorpusRecord for EvidenceClaim {
    const KIND: CorpusKind = CorpusKind::Evidence;

    fn id(&self) -> &str {
        &self.id
    }

    fn check(&mut self, line: usize) -> Result<(), CorpusError> {
        if self.evidence.len() != EVIDENCE_PER_CLAIM {
            return Err(CorpusError::WrongEvidenceCount {
                line,
                id: self.id.clone(),
                count: self.evidence.len(),
            });
        }
        if self.cards_label.trim().is_empty() {
            return Err(malformed(line, "cards_label is empty"));
        }
        if self.claim_text.trim().is_empty() {
            return Err(malformed(line, "claim_text is empty"));
        }
        if self.evidence.iter().any(|e| e.text.trim().is_empty()) {
            return Err(malformed(line, "empty evidence sentence"));
        }
        Ok(())
    }
}

/// An immutable, validated corpus.
#[derive(Debug, Clone)]
pub struct Corpus<T> {
    records: Vec<T>,
    by_id: HashMap<String, usize>,
    warnings: Vec<String>,
}

pub type ExemplarCorpus = Corpus<ExemplarRecord>;
pub type EvidenceCorpus = Corpus<EvidenceClaim>;
pub type MythCorpus = Corpus<MythRecord>;

impl<T: CorpusRecord> Corpus<T> {
    pub fn from_records(records: Vec<T>) -> Result<Self, CorpusError> {
        let mut text = String::new();
        for r in &records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut records = Vec::new();
        let mut by_id = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let mut record: T =
                serde_json::from_str(raw).map_err(|e| malformed(line, e.to_string()))?;
            if record.id().trim().is_empty() {
                return Err(malformed(line, "id is empty"));
            }
            record.check(line)?;
            if by_id
                .insert(record.id().to_string(), records.len())
                .is_some()
            {
                return Err(CorpusError::DuplicateId {
                    line,
                    id: record.id().to_string(),
                });
            }
            records.push(record);
        }
        let mut warnings = Vec::new();
        if records.is_empty() {
            let msg = format!("{:?} corpus contains no records", T::KIND);
            warn!("{msg}");
            warnings.push(msg);
        }
        Ok(Self {
            records,
            by_id,
            warnings,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// JSON-lines serialization in record order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// A loaded corpus of any kind, for tools that validate files generically.
#[derive(Debug, Clone)]
pub enum LoadedCorpus {
    Exemplars(ExemplarCorpus),
    Evidence(EvidenceCorpus),
    Myths(MythCorpus),
}

impl LoadedCorpus {
    pub fn len(&self) -> usize {
        match self {
            LoadedCorpus::Exemplars(c) => c.len(),
            LoadedCorpus::Evidence(c) => c.len(),
            LoadedCorpus::Myths(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            LoadedCorpus::Exemplars(c) => c.warnings(),
            LoadedCorpus::Evidence(c) => c.warnings(),
            LoadedCorpus::Myths(c) => c.warnings(),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, kind: CorpusKind) -> Result<LoadedCorpus, CorpusError> {
    Ok(match kind {
        CorpusKind::Exemplars => LoadedCorpus::Exemplars(Corpus::load(path)?),
        CorpusKind::Evidence => LoadedCorpus::Evidence(Corpus::load(path)?),
        CorpusKind::Myths => LoadedCorpus::Myths(Corpus::load(path)?),
    })
}
