use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Endpoint, GatewayError, Transport};

pub const MAX_SEARCH_RESULTS: usize = 5;
pub const SNIPPET_BUDGET_CHARS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

/// Lowercases, trims and collapses whitespace; replay is keyed on this form.
pub fn normalize_query(query: &str) -> String {
    query
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((idx, _)) => text[..idx].to_string(),
        None => text.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct SearchGateway {
    transport: Arc<dyn Transport>,
    snippet_budget: usize,
}

impl SearchGateway {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            snippet_budget: SNIPPET_BUDGET_CHARS,
        }
    }

    pub fn with_snippet_budget(mut self, chars: usize) -> Self {
        self.snippet_budget = chars;
        self
    }

    /// At most five results, snippets cut to the character budget.
    pub fn web_search(&self, query: &str) -> Result<Vec<SearchResult>, GatewayError> {
        let query = normalize_query(query);
        if query.is_empty() {
            return Err(GatewayError::invalid_request(
                Endpoint::Search,
                "query is empty",
            ));
        }
        let body = json!({ "query": query, "max_results": MAX_SEARCH_RESULTS });
        let response = self.transport.call(Endpoint::Search, &body)?;
        let hits = response
            .get("results")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::invalid_response(Endpoint::Search, "missing results"))?;
        hits.iter()
            .take(MAX_SEARCH_RESULTS)
            .map(|hit| {
                let field = |name: &str| {
                    hit.get(name)
                        .and_then(Value::as_str)
                        .unwrap_or("")
                        .to_string()
                };
                Ok(SearchResult {
                    title: field("title"),
                    snippet: truncate_chars(&field("snippet"), self.snippet_budget),
                    url: field("url"),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::FnTransport;

    fn provider(n: usize) -> Arc<dyn Transport> {
        Arc::new(FnTransport(move |_, _: &Value| {
            let results: Vec<Value> = (0..n)
                .map(|i| json!({"title": format!("t{i}"), "snippet": "é".repeat(1500), "url": format!("https://example.org/{i}")}))
                .collect();
            Ok(json!({ "results": results }))
        }))
    }

    #[test]
    fn caps_at_five_results() {
        let out = SearchGateway::new(provider(12))
            .web_search("sunspots")
            .unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(out[4].title, "t4");
    }

    #[test]
    fn zero_hits_is_empty() {
        assert!(SearchGateway::new(provider(0))
            .web_search("nothing")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn snippets_truncated_on_char_boundary() {
        let out = SearchGateway::new(provider(1)).web_search("x").unwrap();
        assert_eq!(out[0].snippet.chars().count(), SNIPPET_BUDGET_CHARS);
    }

    #[test]
    fn query_normalization() {
        assert_eq!(
            normalize_query("  Solar  Irradiance\ncontribution "),
            "solar irradiance contribution"
        );
        assert!(matches!(
            SearchGateway::new(provider(1)).web_search("   "),
            Err(GatewayError::InvalidRequest { .. })
        ));
    }
}
