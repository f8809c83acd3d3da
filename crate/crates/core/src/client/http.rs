use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, DecodingParams, Message, ModelError};

/// Adapter for OpenAI-compatible `chat/completions` endpoints.
pub struct OpenAiBackend {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

impl OpenAiBackend {
    /// `api_key_env` names the environment variable holding the key; the key
    /// itself is never written anywhere.
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<&str>, timeout: Duration) -> Result<Self, ModelError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ModelError::Credential(format!("${var} is not set")))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        Ok(OpenAiBackend {
            endpoint: endpoint.into(),
            api_key,
            http,
        })
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, messages: &[Message], params: &DecodingParams) -> Result<String, ModelError> {
        let body = ChatRequest {
            model: &params.model,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut request = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ModelError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ModelError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ModelError::Malformed("no choices in response".into()))
    }
}
