use std::io::{BufRead, BufReader};
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{BackendReply, ChatBackend, ChatRequest, LlmError, ProviderUsage, StreamControl};

pub const LLM_ENDPOINT_ENV: &str = "LLM_ENDPOINT";
pub const LLM_API_KEY_ENV: &str = "LLM_API_KEY";
const EXCERPT_CHARS: usize = 200;

/// OpenAI-compatible chat-completions client. `endpoint` is the full URL of
/// the completions route.
pub struct HttpChatBackend {
    endpoint: String,
    api_key: Option<String>,
    client: Client,
}

impl std::fmt::Debug for HttpChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpChatBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = Client::builder()
            .connect_timeout(Duration::from_secs(30))
            .timeout(Duration::from_secs(1800))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key: api_key.filter(|k| !k.trim().is_empty()),
            client,
        })
    }

    /// Reads the endpoint from `LLM_ENDPOINT` and the optional key from
    /// `LLM_API_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var(LLM_ENDPOINT_ENV)
            .map_err(|_| LlmError::Transport(format!("environment variable {LLM_ENDPOINT_ENV} is not set")))?;
        Self::new(endpoint, std::env::var(LLM_API_KEY_ENV).ok())
    }

    fn body(request: &ChatRequest<'_>, stream: bool) -> Value {
        let p = &request.profile.params;
        let mut body = json!({
            "model": request.profile.name,
            "messages": request.messages,
            "temperature": p.temperature,
            "top_p": p.top_p,
            "repetition_penalty": p.repetition_penalty,
            "max_tokens": request.max_tokens,
            "stream": stream,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if stream {
            body["stream_options"] = json!({ "include_usage": true });
        }
        body
    }

    fn send(&self, body: &Value) -> Result<reqwest::blocking::Response, LlmError> {
        let mut builder = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(LlmError::Provider {
                status: status.as_u16(),
                excerpt: text.chars().take(EXCERPT_CHARS).collect(),
            });
        }
        Ok(response)
    }
}

fn parse_usage(value: &Value) -> Option<ProviderUsage> {
    let usage = value.get("usage")?;
    Some(ProviderUsage {
        prompt_tokens: usage.get("prompt_tokens")?.as_u64()?,
        completion_tokens: usage.get("completion_tokens")?.as_u64()?,
    })
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<BackendReply, LlmError> {
        let response = self.send(&Self::body(request, false))?;
        let body = response.text().map_err(|e| LlmError::Transport(e.to_string()))?;
        let value: Value = serde_json::from_str(&body).map_err(|e| LlmError::Parse(e.to_string()))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Parse("missing choices[0].message.content".into()))?;
        Ok(BackendReply {
            text: text.to_string(),
            usage: parse_usage(&value),
        })
    }

    fn stream(
        &self,
        request: &ChatRequest<'_>,
        on_delta: &mut dyn FnMut(&str) -> StreamControl,
    ) -> Result<Option<ProviderUsage>, LlmError> {
        let response = self.send(&Self::body(request, true))?;
        let reader = BufReader::new(response);
        let mut usage = None;
        for line in reader.lines() {
            let line = line.map_err(|e| LlmError::Transport(e.to_string()))?;
            let Some(data) = line.strip_prefix("data:") else { continue };
            let data = data.trim();
            if data == "[DONE]" {
                break;
            }
            let value: Value = serde_json::from_str(data).map_err(|e| LlmError::Parse(e.to_string()))?;
            if let Some(u) = parse_usage(&value) {
                usage = Some(u);
            }
            let delta = value
                .pointer("/choices/0/delta/content")
                .and_then(Value::as_str)
                .unwrap_or_default();
            if !delta.is_empty() && on_delta(delta) == StreamControl::Stop {
                return Ok(None);
            }
        }
        Ok(usage)
    }

    fn label(&self) -> String {
        "http".into()
    }
}
