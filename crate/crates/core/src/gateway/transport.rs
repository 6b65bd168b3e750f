use std::fmt;
use std::time::Duration;

use serde_json::Value;

use super::{Endpoint, GatewayError};

/// Moves one JSON request body to a backend and returns its JSON response.
pub trait Transport: Send + Sync + fmt::Debug {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError>;
}

/// A transport for capabilities that were never configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unconfigured;

impl Transport for Unconfigured {
    fn call(&self, endpoint: Endpoint, _body: &Value) -> Result<Value, GatewayError> {
        Err(GatewayError::BackendUnavailable {
            endpoint,
            reason: "no backend configured".to_string(),
        })
    }
}

/// Adapts a closure into a transport; handy for scripted backends in tests.
pub struct FnTransport<F>(pub F);

impl<F> fmt::Debug for FnTransport<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnTransport")
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(Endpoint, &Value) -> Result<Value, GatewayError> + Send + Sync,
{
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        (self.0)(endpoint, body)
    }
}

/// Live JSON-over-HTTP backend.
///
/// Routes: chat posts to `{base}/chat/completions` (OpenAI-compatible),
/// both classifiers to `{base}/classify`, embeddings to `{base}/embed` and
/// search to `{base}/search`.
pub struct HttpTransport {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn url_for(&self, endpoint: Endpoint) -> String {
        let path = match endpoint {
            Endpoint::Chat => "chat/completions",
            Endpoint::Fallacy | Endpoint::Cards => "classify",
            Endpoint::Embed => "embed",
            Endpoint::Search => "search",
        };
        format!("{}/{}", self.base_url, path)
    }
}

impl Transport for HttpTransport {
    fn call(&self, endpoint: Endpoint, body: &Value) -> Result<Value, GatewayError> {
        let unavailable = |reason: String| GatewayError::BackendUnavailable { endpoint, reason };
        let mut request = self.agent.post(&self.url_for(endpoint));
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(unavailable(format!("HTTP {status}: {}", text.trim())));
        }
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| GatewayError::invalid_response(endpoint, e.to_string()))
    }
}
