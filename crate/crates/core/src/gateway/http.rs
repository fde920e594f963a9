//! Backend for OpenAI-compatible `/chat/completions` and `/embeddings`.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, EmbedBackend, EmbeddingRequest, GatewayError, ProviderError};

pub const API_KEY_ENV: &str = "PROTOEVAL_API_KEY";
pub const API_BASE_ENV: &str = "PROTOEVAL_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

pub struct OpenAiCompatible {
    base_url: String,
    api_key: String,
    client: Client,
}

impl OpenAiCompatible {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Internal(format!("http client: {e}")))?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the key and optional base URL from the environment.
    pub fn from_env() -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::Provider {
                attempts: 0,
                message: format!("{API_KEY_ENV} is not set"),
            })?;
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Self::new(base, key)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let response = self
            .client
            .post(format!("{}/{path}", self.base_url))
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| ProviderError::transient(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| ProviderError::transient(format!("reading body: {e}")))?;
        if !status.is_success() {
            let message = format!("HTTP {status}: {}", truncate(&text, 300));
            return Err(if is_transient(status) {
                ProviderError::transient(message)
            } else {
                ProviderError::fatal(message)
            });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::fatal(format!("bad JSON: {e}")))
    }
}

fn is_transient(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT || status.is_server_error()
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn chat_body(request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": request.model_id,
        "messages": request.messages,
        "temperature": request.temperature,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    if let Some(max) = request.max_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

impl ChatBackend for OpenAiCompatible {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let value = self.post("chat/completions", &chat_body(request))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::fatal("response has no choices[0].message.content"))
    }
}

impl EmbedBackend for OpenAiCompatible {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, ProviderError> {
        let body = json!({ "model": request.model_id, "input": request.texts });
        let value = self.post("embeddings", &body)?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| ProviderError::fatal("response has no data array"))?;
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().unwrap_or(i as u64);
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| ProviderError::fatal("data item has no embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| ProviderError::fatal("non-numeric embedding")))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push((index, vector));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    #[test]
    fn chat_body_includes_optional_fields_only_when_set() {
        let mut r = ChatRequest::new("gpt", vec![Message::user("hi")]);
        let body = chat_body(&r);
        assert_eq!(body["messages"][0]["role"], "user");
        assert!(body.get("seed").is_none());
        r.seed = Some(7);
        r.max_tokens = Some(64);
        let body = chat_body(&r);
        assert_eq!(body["seed"], 7);
        assert_eq!(body["max_tokens"], 64);
    }

    #[test]
    fn classifies_status_codes() {
        assert!(is_transient(StatusCode::TOO_MANY_REQUESTS));
        assert!(is_transient(StatusCode::BAD_GATEWAY));
        assert!(!is_transient(StatusCode::UNAUTHORIZED));
        assert_eq!(truncate("héllo", 2), "hé");
    }
}
