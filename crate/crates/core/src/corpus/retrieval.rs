//! Embedding-space selection of exemplars and evidence.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EvidenceClaim, EvidenceCorpus, ExemplarCorpus, ExemplarRecord};
use crate::gateway::{EmbedGateway, GatewayError};
use crate::taxonomy::Fallacy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("vectors have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("embedding must be non-empty and finite")]
    InvalidVector,
    #[error("no exemplar is labelled {0}")]
    NoCandidates(Fallacy),
    #[error("exemplar corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Embedding(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::InvalidVector);
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, RetrievalError> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch(
            a.dimension(),
            b.dimension(),
        ));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Where corpus texts get their vectors from.
pub trait VectorSource {
    fn vector(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

impl VectorSource for EmbedGateway {
    fn vector(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        Ok(self.embed(text)?)
    }
}

impl<F> VectorSource for F
where
    F: Fn(&str) -> Result<EmbeddingVector, RetrievalError>,
{
    fn vector(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarMatch {
    pub record: ExemplarRecord,
    pub similarity: f64,
}

/// Higher score wins; equal scores go to the lexicographically smaller id.
fn beats(score: f64, id: &str, best: Option<(f64, &str)>) -> bool {
    match best {
        None => true,
        Some((b, bid)) => match score.partial_cmp(&b) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => id < bid,
            _ => false,
        },
    }
}

fn argmax_exemplar<'a>(
    myth_vec: &EmbeddingVector,
    candidates: impl Iterator<Item = &'a ExemplarRecord>,
    vectors: &dyn VectorSource,
) -> Result<Option<ExemplarMatch>, RetrievalError> {
    let mut best: Option<(f64, &ExemplarRecord)> = None;
    for record in candidates {
        let v = vectors.vector(&record.myth_text)?;
        let score = cosine_similarity(myth_vec, &v)?;
        if beats(score, &record.id, best.map(|(s, r)| (s, r.id.as_str()))) {
            best = Some((score, record));
        }
    }
    Ok(best.map(|(similarity, record)| ExemplarMatch {
        record: record.clone(),
        similarity,
    }))
}

/// The exemplar labelled `fallacy` whose myth is most similar to the input.
pub fn select_exemplar(
    myth_vec: &EmbeddingVector,
    fallacy: Fallacy,
    corpus: &ExemplarCorpus,
    vectors: &dyn VectorSource,
) -> Result<ExemplarMatch, RetrievalError> {
    argmax_exemplar(
        myth_vec,
        corpus.records().iter().filter(|r| r.fallacy == fallacy),
        vectors,
    )?
    .ok_or(RetrievalError::NoCandidates(fallacy))
}

/// Most similar exemplar regardless of label.
pub fn select_exemplar_global(
    myth_vec: &EmbeddingVector,
    corpus: &ExemplarCorpus,
    vectors: &dyn VectorSource,
) -> Result<ExemplarMatch, RetrievalError> {
    argmax_exemplar(myth_vec, corpus.records().iter(), vectors)?.ok_or(RetrievalError::EmptyCorpus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSentence {
    /// `<claim id>:<position in the claim's evidence list>`.
    pub sentence_id: String,
    pub source_id: String,
    pub text: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMatch {
    pub claim: EvidenceClaim,
    pub claim_similarity: f64,
    /// All five sentences, most similar to the myth first.
    pub sentences: Vec<RankedSentence>,
}

/// Picks the label-matched claim closest to the myth and orders its
/// evidence by similarity to the myth. `None` when no claim has the label.
pub fn select_evidence(
    myth_vec: &EmbeddingVector,
    cards_label: &str,
    corpus: &EvidenceCorpus,
    vectors: &dyn VectorSource,
) -> Result<Option<EvidenceMatch>, RetrievalError> {
    let mut best: Option<(f64, &EvidenceClaim)> = None;
    for claim in corpus
        .records()
        .iter()
        .filter(|c| c.cards_label == cards_label)
    {
        let score = cosine_similarity(myth_vec, &vectors.vector(&claim.claim_text)?)?;
        if beats(score, &claim.id, best.map(|(s, c)| (s, c.id.as_str()))) {
            best = Some((score, claim));
        }
    }
    let Some((claim_similarity, claim)) = best else {
        return Ok(None);
    };
    let mut sentences = claim
        .evidence
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(RankedSentence {
                sentence_id: format!("{}:{}", claim.id, i),
                source_id: e.source_id.clone(),
                text: e.text.clone(),
                similarity: cosine_similarity(myth_vec, &vectors.vector(&e.text)?)?,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    // stable sort keeps list order among equal scores
    sentences.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(Ordering::Equal)
    });
    Ok(Some(EvidenceMatch {
        claim: claim.clone(),
        claim_similarity,
        sentences,
    }))
}
