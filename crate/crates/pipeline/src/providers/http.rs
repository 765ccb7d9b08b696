//! Live chat transports. Each request is a single user message holding the
//! rendered prompt, with no system message. Keys come from environment
//! variables and are never logged.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Completion, ProviderRequest, Transport, TransportError, TransportErrorKind, Usage};

pub const OPENAI_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const ANTHROPIC_ENDPOINT: &str = "https://api.anthropic.com/v1/messages";
const ANTHROPIC_VERSION: &str = "2023-06-01";

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn api_key(var: &str) -> Result<String, TransportError> {
    std::env::var(var)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| TransportError::new(TransportErrorKind::Auth, format!("environment variable {var} is not set")))
}

fn classify(status: u16, body: &str) -> TransportError {
    let kind = match status {
        401 | 403 => TransportErrorKind::Auth,
        408 | 409 | 429 | 500..=599 => TransportErrorKind::Transient,
        _ => TransportErrorKind::Fatal,
    };
    let snippet: String = body.chars().take(300).collect();
    TransportError::new(kind, format!("HTTP {status}: {snippet}"))
}

fn post(agent: &ureq::Agent, url: &str, headers: &[(&str, String)], body: Value) -> Result<Value, TransportError> {
    let mut req = agent.post(url);
    for (k, v) in headers {
        req = req.header(*k, v);
    }
    let resp = req
        .send_json(body)
        .map_err(|e| TransportError::new(TransportErrorKind::Transient, e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .into_body()
        .read_to_string()
        .map_err(|e| TransportError::new(TransportErrorKind::Transient, e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(classify(status, &text));
    }
    serde_json::from_str(&text)
        .map_err(|e| TransportError::new(TransportErrorKind::Fatal, format!("unparseable response: {e}")))
}

fn malformed(what: &str) -> TransportError {
    TransportError::new(TransportErrorKind::Fatal, format!("response lacks {what}"))
}

pub struct OpenAiTransport {
    endpoint: String,
    key_var: String,
    agent: ureq::Agent,
}

impl OpenAiTransport {
    pub fn new(endpoint: &str, key_var: &str, timeout: Duration) -> Self {
        OpenAiTransport { endpoint: endpoint.to_string(), key_var: key_var.to_string(), agent: agent(timeout) }
    }
}

pub(crate) fn openai_body(request: &ProviderRequest) -> Value {
    let mut body = json!({
        "model": request.params.model_id,
        "messages": [{"role": "user", "content": request.prompt}],
        "max_tokens": request.params.max_tokens,
    });
    if let Some(t) = request.params.temperature {
        body["temperature"] = json!(t);
    }
    body
}

impl Transport for OpenAiTransport {
    fn call(&self, request: &ProviderRequest) -> Result<Completion, TransportError> {
        let key = api_key(&self.key_var)?;
        let v = post(&self.agent, &self.endpoint, &[("Authorization", format!("Bearer {key}"))], openai_body(request))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| malformed("choices[0].message.content"))?;
        Ok(Completion {
            text: text.to_string(),
            usage: Usage {
                prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            },
        })
    }

    fn is_live(&self) -> bool {
        true
    }
}

pub struct AnthropicTransport {
    endpoint: String,
    key_var: String,
    agent: ureq::Agent,
}

impl AnthropicTransport {
    pub fn new(endpoint: &str, key_var: &str, timeout: Duration) -> Self {
        AnthropicTransport { endpoint: endpoint.to_string(), key_var: key_var.to_string(), agent: agent(timeout) }
    }
}

pub(crate) fn anthropic_body(request: &ProviderRequest) -> Value {
    let mut body = json!({
        "model": request.params.model_id,
        "max_tokens": request.params.max_tokens,
        "messages": [{"role": "user", "content": request.prompt}],
    });
    if let Some(t) = request.params.temperature {
        body["temperature"] = json!(t);
    }
    body
}

impl Transport for AnthropicTransport {
    fn call(&self, request: &ProviderRequest) -> Result<Completion, TransportError> {
        let key = api_key(&self.key_var)?;
        let headers = [("x-api-key", key), ("anthropic-version", ANTHROPIC_VERSION.to_string())];
        let v = post(&self.agent, &self.endpoint, &headers, anthropic_body(request))?;
        let blocks = v["content"].as_array().ok_or_else(|| malformed("content"))?;
        let text: String = blocks
            .iter()
            .filter(|b| b["type"] == "text")
            .filter_map(|b| b["text"].as_str())
            .collect();
        Ok(Completion {
            text,
            usage: Usage {
                prompt_tokens: v["usage"]["input_tokens"].as_u64().unwrap_or(0),
                completion_tokens: v["usage"]["output_tokens"].as_u64().unwrap_or(0),
            },
        })
    }

    fn is_live(&self) -> bool {
        true
    }
}
