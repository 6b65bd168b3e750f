//! Clients for the five external capabilities: chat completion, fallacy
//! classification, claim-category classification, text embedding and web
//! search.
//!
//! Every typed gateway sits on a [`Transport`] that moves JSON request and
//! response bodies. Live HTTP, recording and replaying are all transports,
//! so post-processing (stop-sequence truncation, result caps, label checks)
//! runs identically in every mode.

mod cassette;
mod chat;
mod classify;
mod embed;
mod search;
mod transport;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{request_digest, Cassette, CassetteEntry, CassetteError, Recorder, Replayer};
pub use chat::{truncate_at_stop, ChatGateway, ChatRequest, ChatSettings};
pub use classify::{CardsGateway, CardsPrediction, FallacyGateway, FallacyPrediction};
pub use embed::{EmbedBackend, EmbedGateway, StubEmbedder, STUB_DIMENSION};
pub use search::{
    normalize_query, SearchGateway, SearchResult, MAX_SEARCH_RESULTS, SNIPPET_BUDGET_CHARS,
};
pub use transport::{FnTransport, HttpTransport, Transport, Unconfigured};

/// Which external capability a request targets. Part of every cassette key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Chat,
    Fallacy,
    Cards,
    Embed,
    Search,
}

impl Endpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Endpoint::Chat => "chat",
            Endpoint::Fallacy => "fallacy",
            Endpoint::Cards => "cards",
            Endpoint::Embed => "embed",
            Endpoint::Search => "search",
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("{endpoint} backend unavailable: {reason}")]
    BackendUnavailable { endpoint: Endpoint, reason: String },
    #[error("no recorded {endpoint} response for request {digest}")]
    ReplayMiss { endpoint: Endpoint, digest: String },
    #[error("generation stopped at the {max_output_tokens}-token output limit")]
    TokenLimitExceeded { max_output_tokens: u32 },
    #[error("classifier returned label {0:?} outside the fallacy taxonomy")]
    UnknownLabel(String),
    #[error("invalid {endpoint} request: {reason}")]
    InvalidRequest { endpoint: Endpoint, reason: String },
    #[error("malformed {endpoint} response: {reason}")]
    InvalidResponse { endpoint: Endpoint, reason: String },
    #[error("embedding dimension {actual} does not match configured {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

impl GatewayError {
    pub(crate) fn invalid_request(endpoint: Endpoint, reason: impl Into<String>) -> Self {
        GatewayError::InvalidRequest {
            endpoint,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid_response(endpoint: Endpoint, reason: impl Into<String>) -> Self {
        GatewayError::InvalidResponse {
            endpoint,
            reason: reason.into(),
        }
    }
}

/// The full set of gateways a pipeline run may use. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct Gateways {
    pub chat: ChatGateway,
    pub fallacy: FallacyGateway,
    pub cards: CardsGateway,
    pub embed: EmbedGateway,
    pub search: SearchGateway,
}

impl Gateways {
    /// Gateways that all report `BackendUnavailable`, except the stub
    /// embedder. A starting point for tests and partial configurations.
    pub fn unconfigured() -> Self {
        let none: std::sync::Arc<dyn Transport> = std::sync::Arc::new(Unconfigured);
        Self {
            chat: ChatGateway::new(none.clone(), ChatSettings::default()),
            fallacy: FallacyGateway::new(none.clone()),
            cards: CardsGateway::new(none.clone()),
            embed: EmbedGateway::stub(),
            search: SearchGateway::new(none),
        }
    }
}
