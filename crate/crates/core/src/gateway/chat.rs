use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Endpoint, GatewayError, Transport};
use crate::prompt::{strip_chat_delimiters, RenderedPrompt};

/// One chat-completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: Option<String>,
    pub user_text: String,
    pub stop_sequences: Vec<String>,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Only sent (and only part of the cassette key) when sampling is on.
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn from_prompt(prompt: &RenderedPrompt, settings: &ChatSettings, seed: u64) -> Self {
        Self {
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
            stop_sequences: prompt.stop_sequences.clone(),
            max_output_tokens: settings.max_output_tokens,
            temperature: settings.temperature,
            seed: Some(seed),
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        let bad = |r: &str| Err(GatewayError::invalid_request(Endpoint::Chat, r));
        if self.user_text.trim().is_empty() {
            return bad("user_text is empty");
        }
        if self.stop_sequences.iter().any(|s| s.is_empty()) {
            return bad("empty stop sequence");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite non-negative number");
        }
        Ok(())
    }
}

/// Per-backend chat configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatSettings {
    pub model: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Remove `<s>`, `[INST]`, `<<SYS>>` style delimiters before sending.
    pub strip_delimiters: bool,
}

impl Default for ChatSettings {
    fn default() -> Self {
        Self {
            model: "default".to_string(),
            max_output_tokens: 1024,
            temperature: 0.0,
            strip_delimiters: false,
        }
    }
}

/// Cuts `text` before the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

#[derive(Debug, Clone)]
pub struct ChatGateway {
    transport: Arc<dyn Transport>,
    settings: ChatSettings,
}

impl ChatGateway {
    pub fn new(transport: Arc<dyn Transport>, settings: ChatSettings) -> Self {
        Self {
            transport,
            settings,
        }
    }

    pub fn settings(&self) -> &ChatSettings {
        &self.settings
    }

    /// Wire body in the OpenAI chat-completions layout.
    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let prep = |t: &str| {
            if self.settings.strip_delimiters {
                strip_chat_delimiters(t)
            } else {
                t.to_string()
            }
        };
        let mut messages = Vec::new();
        if let Some(system) = &req.system_text {
            messages.push(json!({"role": "system", "content": prep(system)}));
        }
        messages.push(json!({"role": "user", "content": prep(&req.user_text)}));
        let mut body = json!({
            "model": self.settings.model,
            "messages": messages,
            "max_tokens": req.max_output_tokens,
            "temperature": req.temperature,
        });
        if !req.stop_sequences.is_empty() {
            body["stop"] = json!(req.stop_sequences);
        }
        if req.temperature > 0.0 {
            if let Some(seed) = req.seed {
                body["seed"] = json!(seed);
            }
        }
        body
    }

    /// Returns the generated text, cut at the first stop sequence.
    pub fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let response = self
            .transport
            .call(Endpoint::Chat, &self.request_body(req))?;
        let choice = response
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| GatewayError::invalid_response(Endpoint::Chat, "no choices"))?;
        if choice.get("finish_reason").and_then(Value::as_str) == Some("length") {
            return Err(GatewayError::TokenLimitExceeded {
                max_output_tokens: req.max_output_tokens,
            });
        }
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::invalid_response(Endpoint::Chat, "no message content"))?;
        Ok(truncate_at_stop(text, &req.stop_sequences).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Cassette, FnTransport, Replayer, Unconfigured};

    fn reply(text: &'static str) -> Arc<dyn Transport> {
        Arc::new(FnTransport(move |_, _: &Value| {
            Ok(
                json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]}),
            )
        }))
    }

    fn request(stops: &[&str]) -> ChatRequest {
        ChatRequest {
            system_text: None,
            user_text: "Question: why?".into(),
            stop_sequences: stops.iter().map(|s| s.to_string()).collect(),
            max_output_tokens: 64,
            temperature: 0.0,
            seed: Some(7),
        }
    }

    #[test]
    fn truncates_at_observation() {
        let gw = ChatGateway::new(
            reply("Thought: look it up\nAction: web_search\nAction Input: x\nObservation: fake"),
            ChatSettings::default(),
        );
        let out = gw.complete(&request(&["Observation:"])).unwrap();
        assert_eq!(
            out,
            "Thought: look it up\nAction: web_search\nAction Input: x\n"
        );
    }

    #[test]
    fn earliest_stop_wins() {
        let stops = vec!["B".to_string(), "A".to_string()];
        assert_eq!(truncate_at_stop("xxAyyB", &stops), "xx");
        assert_eq!(truncate_at_stop("plain", &stops), "plain");
    }

    #[test]
    fn unconfigured_backend() {
        let gw = ChatGateway::new(Arc::new(Unconfigured), ChatSettings::default());
        assert!(matches!(
            gw.complete(&request(&[])),
            Err(GatewayError::BackendUnavailable {
                endpoint: Endpoint::Chat,
                ..
            })
        ));
    }

    #[test]
    fn length_finish_is_token_limit() {
        let t: Arc<dyn Transport> = Arc::new(FnTransport(|_, _: &Value| {
            Ok(json!({"choices": [{"message": {"content": "cut"}, "finish_reason": "length"}]}))
        }));
        let gw = ChatGateway::new(t, ChatSettings::default());
        assert_eq!(
            gw.complete(&request(&[])),
            Err(GatewayError::TokenLimitExceeded {
                max_output_tokens: 64
            })
        );
    }

    #[test]
    fn rejects_invalid_requests() {
        let gw = ChatGateway::new(reply("x"), ChatSettings::default());
        let mut r = request(&[""]);
        assert!(matches!(
            gw.complete(&r),
            Err(GatewayError::InvalidRequest { .. })
        ));
        r = request(&[]);
        r.user_text = " ".into();
        assert!(matches!(
            gw.complete(&r),
            Err(GatewayError::InvalidRequest { .. })
        ));
    }

    #[test]
    fn replay_returns_recorded_text_and_seed_is_inert_at_zero_temperature() {
        let cassette = Arc::new(Cassette::in_memory());
        let live = ChatGateway::new(reply("recorded words"), ChatSettings::default());
        let req = request(&[]);
        cassette.insert(
            Endpoint::Chat,
            &live.request_body(&req),
            json!({"choices": [{"message": {"content": "recorded words"}}]}),
        );
        let replay = ChatGateway::new(Arc::new(Replayer::new(cassette)), ChatSettings::default());
        assert_eq!(replay.complete(&req).unwrap(), "recorded words");
        let mut other_seed = req.clone();
        other_seed.seed = Some(99);
        assert_eq!(replay.complete(&other_seed).unwrap(), "recorded words");
    }

    #[test]
    fn strips_delimiters_when_asked() {
        let settings = ChatSettings {
            strip_delimiters: true,
            ..ChatSettings::default()
        };
        let gw = ChatGateway::new(reply("x"), settings);
        let mut req = request(&[]);
        req.user_text = "<s>[INST] hi [/INST]".into();
        let body = gw.request_body(&req);
        assert_eq!(body["messages"][0]["content"], " hi ");
    }
}
