use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Endpoint, GatewayError, Transport};
use crate::taxonomy::Fallacy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallacyPrediction {
    pub label: Fallacy,
    pub confidence: f64,
}

/// Claim-category prediction. Labels are opaque category codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardsPrediction {
    pub label: String,
    pub confidence: f64,
}

fn classify(
    transport: &dyn Transport,
    endpoint: Endpoint,
    text: &str,
) -> Result<(String, f64), GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::invalid_request(endpoint, "text is empty"));
    }
    let response = transport.call(endpoint, &json!({ "text": text }))?;
    let label = response
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::invalid_response(endpoint, "missing label"))?
        .trim()
        .to_string();
    let confidence = response
        .get("confidence")
        .and_then(Value::as_f64)
        .ok_or_else(|| GatewayError::invalid_response(endpoint, "missing confidence"))?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(GatewayError::invalid_response(
            endpoint,
            format!("confidence {confidence} outside [0, 1]"),
        ));
    }
    Ok((label, confidence))
}

#[derive(Debug, Clone)]
pub struct FallacyGateway {
    transport: Arc<dyn Transport>,
}

impl FallacyGateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    pub fn predict_fallacy(&self, text: &str) -> Result<FallacyPrediction, GatewayError> {
        let (label, confidence) = classify(self.transport.as_ref(), Endpoint::Fallacy, text)?;
        let label = label
            .parse::<Fallacy>()
            .map_err(|e| GatewayError::UnknownLabel(e.0))?;
        Ok(FallacyPrediction { label, confidence })
    }
}

#[derive(Debug, Clone)]
pub struct CardsGateway {
    transport: Arc<dyn Transport>,
}

impl CardsGateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport }
    }

    pub fn predict_cards(&self, text: &str) -> Result<CardsPrediction, GatewayError> {
        let (label, confidence) = classify(self.transport.as_ref(), Endpoint::Cards, text)?;
        if label.is_empty() {
            return Err(GatewayError::invalid_response(
                Endpoint::Cards,
                "empty label",
            ));
        }
        Ok(CardsPrediction { label, confidence })
    }
}
