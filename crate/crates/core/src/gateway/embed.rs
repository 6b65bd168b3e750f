use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{Endpoint, GatewayError, Transport};
use crate::corpus::EmbeddingVector;

pub const STUB_DIMENSION: usize = 32;

fn content_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Offline embedder: a pseudo-random unit vector seeded by the SHA-256 of
/// the text. Distinct texts give unrelated directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub dimension: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self {
            dimension: STUB_DIMENSION,
        }
    }
}

impl StubEmbedder {
    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::from_seed(content_hash(text));
        loop {
            let values: Vec<f64> = (0..self.dimension)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                let unit = values.into_iter().map(|v| v / norm).collect();
                return EmbeddingVector::new(unit).expect("finite, non-empty");
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum EmbedBackend {
    Stub(StubEmbedder),
    /// Remote model and the dimension it is declared to produce.
    Remote {
        transport: Arc<dyn Transport>,
        dimension: usize,
    },
}

impl EmbedBackend {
    fn dimension(&self) -> usize {
        match self {
            EmbedBackend::Stub(s) => s.dimension,
            EmbedBackend::Remote { dimension, .. } => *dimension,
        }
    }
}

/// Embedding client with a content-hash keyed cache shared by clones.
#[derive(Debug, Clone)]
pub struct EmbedGateway {
    backend: EmbedBackend,
    dimension: usize,
    cache: Arc<Mutex<HashMap<[u8; 32], EmbeddingVector>>>,
}

impl EmbedGateway {
    /// Fails when the backend's dimension differs from `configured_dimension`.
    pub fn new(backend: EmbedBackend, configured_dimension: usize) -> Result<Self, GatewayError> {
        let actual = backend.dimension();
        if actual != configured_dimension || actual == 0 {
            return Err(GatewayError::DimensionMismatch {
                expected: configured_dimension,
                actual,
            });
        }
        Ok(Self {
            backend,
            dimension: configured_dimension,
            cache: Arc::default(),
        })
    }

    pub fn stub() -> Self {
        Self::new(EmbedBackend::Stub(StubEmbedder::default()), STUB_DIMENSION)
            .expect("stub dimension matches")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cached_len(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::invalid_request(
                Endpoint::Embed,
                "text is empty",
            ));
        }
        let key = content_hash(text);
        if let Some(hit) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(hit);
        }
        let vector = match &self.backend {
            EmbedBackend::Stub(stub) => stub.embed(text),
            EmbedBackend::Remote { transport, .. } => {
                let response = transport.call(Endpoint::Embed, &json!({ "text": text }))?;
                let values: Vec<f64> = response
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| {
                        GatewayError::invalid_response(Endpoint::Embed, "missing embedding")
                    })?
                    .iter()
                    .map(|v| v.as_f64())
                    .collect::<Option<_>>()
                    .ok_or_else(|| {
                        GatewayError::invalid_response(Endpoint::Embed, "non-numeric value")
                    })?;
                if values.len() != self.dimension {
                    return Err(GatewayError::DimensionMismatch {
                        expected: self.dimension,
                        actual: values.len(),
                    });
                }
                EmbeddingVector::new(values)
                    .map_err(|e| GatewayError::invalid_response(Endpoint::Embed, e.to_string()))?
            }
        };
        if let Ok(mut cache) = self.cache.lock() {
            cache.insert(key, vector.clone());
        }
        Ok(vector)
    }
}
