//! OpenAI-compatible HTTP transport.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatMessage, Transport, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .finish_non_exhaustive()
    }
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

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }

    /// Reads the API key from `key_env`; fails when it is unset or empty.
    pub fn from_env(base_url: impl Into<String>, key_env: &str) -> Result<Self, TransportError> {
        let key = std::env::var(key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| TransportError::fatal(format!("environment variable {key_env} is not set")))?;
        Ok(Self::new(base_url, key, Duration::from_secs(120)))
    }

    fn post<T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: serde_json::Value,
    ) -> Result<T, TransportError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(classify)?;
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| TransportError::retryable(format!("invalid response body: {e}")))
    }
}

fn classify(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            TransportError::retryable(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => TransportError::fatal(format!("HTTP {code}")),
        other => TransportError::retryable(other.to_string()),
    }
}

impl Transport for HttpTransport {
    fn chat(
        &self,
        model: &str,
        messages: &[ChatMessage],
        temperature: f32,
    ) -> Result<String, TransportError> {
        let body = json!({ "model": model, "messages": messages, "temperature": temperature });
        let response: ChatResponse = self.post("chat/completions", body)?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::retryable("response has no message content"))
    }

    fn embed(&self, model: &str, text: &str) -> Result<Vec<f32>, TransportError> {
        let body = json!({ "model": model, "input": text });
        let response: EmbedResponse = self.post("embeddings", body)?;
        response
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| TransportError::retryable("response has no embedding"))
    }
}
