//! Chat-completion and embedding gateway with live, record and replay modes.
//!
//! In replay mode every answer comes from the fixture store and the transport
//! is never touched, which makes the whole authoring pipeline deterministic.

mod embed;
mod fixtures;
mod scripted;
mod transport;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{fallback_embed, tokens, FALLBACK_DIM, FALLBACK_EMBEDDING_MODEL};
pub use fixtures::{chat_key, embed_key, Fixture, FixtureStore};
pub use scripted::{Match, ScriptedTransport};
pub use transport::{HttpTransport, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};

pub const DEFAULT_HELPER_MODEL: &str = "gpt-4-turbo";
pub const DEFAULT_GENERATOR_MODEL: &str = "gpt-3.5-turbo-0125";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelConfig {
    pub helper_model: String,
    pub generator_model: String,
    pub embedding_model: String,
    pub mode: Mode,
    pub fixture_dir: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            helper_model: DEFAULT_HELPER_MODEL.into(),
            generator_model: DEFAULT_GENERATOR_MODEL.into(),
            embedding_model: FALLBACK_EMBEDDING_MODEL.into(),
            mode: Mode::Live,
            fixture_dir: None,
        }
    }
}

impl ModelConfig {
    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Replay,
            fixture_dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if matches!(self.mode, Mode::Replay | Mode::Record) && self.fixture_dir.is_none() {
            return Err(GatewayError::MissingFixtureDir(self.mode));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Whether another attempt may succeed.
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// The network side of the gateway.
pub trait Transport: Send + Sync {
    fn chat(&self, model: &str, messages: &[ChatMessage], temperature: f32)
        -> Result<String, TransportError>;
    fn embed(&self, model: &str, text: &str) -> Result<Vec<f32>, TransportError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request has no messages")]
    EmptyMessages,
    #[error("message {0} has empty content")]
    EmptyContent(usize),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("no replay fixture for request key {key}")]
    ReplayMiss { key: String },
    #[error("gateway call failed after {retries} retries: {message}")]
    Transport { retries: u32, message: String },
    #[error("{0} mode requires a fixture directory")]
    MissingFixtureDir(Mode),
    #[error("{0} mode requires a transport")]
    NoTransport(Mode),
    #[error("fixture {key} is malformed: {reason}")]
    BadFixture { key: String, reason: String },
    #[error("fixture store: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 2,
            base_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Chat,
    Embed,
}

/// One gateway call as seen by a [`CallRecorder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: CallKind,
    pub model: String,
    pub key: String,
    pub elapsed_secs: f64,
}

/// Shared log of calls made through a gateway handle.
#[derive(Debug, Clone, Default)]
pub struct CallRecorder(Arc<Mutex<Vec<CallRecord>>>);

impl CallRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, record: CallRecord) {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).push(record);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.0.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn take(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.0.lock().unwrap_or_else(|p| p.into_inner()))
    }
}

struct Inner {
    mode: Mode,
    transport: Option<Arc<dyn Transport>>,
    store: Option<FixtureStore>,
    temperature: f32,
    retry: RetryPolicy,
}

/// Cheap to clone; clones share the transport and fixture store.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
    recorder: Option<CallRecorder>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.inner.mode)
            .field("fixtures", &self.inner.store.as_ref().map(|s| s.dir().to_path_buf()))
            .finish()
    }
}

impl Gateway {
    pub fn new(
        mode: Mode,
        transport: Option<Arc<dyn Transport>>,
        fixture_dir: Option<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let store = fixture_dir.map(FixtureStore::new);
        match mode {
            Mode::Replay | Mode::Record if store.is_none() => {
                return Err(GatewayError::MissingFixtureDir(mode))
            }
            Mode::Live | Mode::Record if transport.is_none() => {
                return Err(GatewayError::NoTransport(mode))
            }
            _ => {}
        }
        Ok(Self {
            inner: Arc::new(Inner {
                mode,
                transport,
                store,
                temperature: 0.0,
                retry: RetryPolicy::default(),
            }),
            recorder: None,
        })
    }

    pub fn live(transport: Arc<dyn Transport>) -> Self {
        Self::new(Mode::Live, Some(transport), None).expect("live gateway with transport")
    }

    pub fn record(transport: Arc<dyn Transport>, dir: impl Into<PathBuf>) -> Self {
        Self::new(Mode::Record, Some(transport), Some(dir.into())).expect("record gateway")
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Self::new(Mode::Replay, None, Some(dir.into())).expect("replay gateway")
    }

    /// Replay gateway that still holds a transport, used to prove it is never called.
    pub fn replay_with_transport(transport: Arc<dyn Transport>, dir: impl Into<PathBuf>) -> Self {
        Self::new(Mode::Replay, Some(transport), Some(dir.into())).expect("replay gateway")
    }

    /// Replaces the retry policy; only affects handles created afterwards from `self`.
    pub fn with_retry(self, retry: RetryPolicy) -> Self {
        let inner = Inner {
            mode: self.inner.mode,
            transport: self.inner.transport.clone(),
            store: self.inner.store.as_ref().map(|s| FixtureStore::new(s.dir())),
            temperature: self.inner.temperature,
            retry,
        };
        Self {
            inner: Arc::new(inner),
            recorder: self.recorder,
        }
    }

    /// A handle that additionally logs every call into `recorder`.
    pub fn recording(&self, recorder: CallRecorder) -> Self {
        Self {
            inner: self.inner.clone(),
            recorder: Some(recorder),
        }
    }

    pub fn mode(&self) -> Mode {
        self.inner.mode
    }

    pub fn complete(&self, model: &str, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        if let Some(i) = messages.iter().position(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::EmptyContent(i));
        }
        let key = chat_key(model, messages);
        let started = Instant::now();
        let response = match self.inner.mode {
            Mode::Replay => {
                let fixture = self.fixture(&key)?;
                fixture.response.ok_or_else(|| GatewayError::BadFixture {
                    key: key.clone(),
                    reason: "missing `response`".into(),
                })?
            }
            Mode::Live | Mode::Record => {
                let transport = self.transport()?;
                let temperature = self.inner.temperature;
                let text = self.with_retries(|| transport.chat(model, messages, temperature))?;
                if self.inner.mode == Mode::Record {
                    self.store()?.save(&Fixture {
                        key: key.clone(),
                        model: model.to_string(),
                        messages: Some(messages.to_vec()),
                        response: Some(text.clone()),
                        input: None,
                        embedding: None,
                    })?;
                }
                text
            }
        };
        self.log(CallKind::Chat, model, key, started.elapsed());
        Ok(response)
    }

    pub fn embed(&self, model: &str, text: &str) -> Result<Vec<f32>, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        if model == FALLBACK_EMBEDDING_MODEL {
            return Ok(fallback_embed(text, FALLBACK_DIM));
        }
        let key = embed_key(model, text);
        let started = Instant::now();
        let vector = match self.inner.mode {
            Mode::Replay => {
                let fixture = self.fixture(&key)?;
                fixture.embedding.ok_or_else(|| GatewayError::BadFixture {
                    key: key.clone(),
                    reason: "missing `embedding`".into(),
                })?
            }
            Mode::Live | Mode::Record => {
                let transport = self.transport()?;
                let vector = self.with_retries(|| transport.embed(model, text))?;
                if self.inner.mode == Mode::Record {
                    self.store()?.save(&Fixture {
                        key: key.clone(),
                        model: model.to_string(),
                        messages: None,
                        response: None,
                        input: Some(text.to_string()),
                        embedding: Some(vector.clone()),
                    })?;
                }
                vector
            }
        };
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(GatewayError::BadFixture {
                key,
                reason: "embedding contains non-finite values".into(),
            });
        }
        self.log(CallKind::Embed, model, key, started.elapsed());
        Ok(vector)
    }

    fn fixture(&self, key: &str) -> Result<Fixture, GatewayError> {
        self.store()?
            .load(key)?
            .ok_or_else(|| GatewayError::ReplayMiss { key: key.to_string() })
    }

    fn store(&self) -> Result<&FixtureStore, GatewayError> {
        self.inner
            .store
            .as_ref()
            .ok_or(GatewayError::MissingFixtureDir(self.inner.mode))
    }

    fn transport(&self) -> Result<&Arc<dyn Transport>, GatewayError> {
        self.inner
            .transport
            .as_ref()
            .ok_or(GatewayError::NoTransport(self.inner.mode))
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<T, TransportError>,
    ) -> Result<T, GatewayError> {
        let policy = self.inner.retry;
        let mut attempt = 0;
        loop {
            match call() {
                Ok(value) => return Ok(value),
                Err(err) if err.retryable && attempt < policy.retries => {
                    let delay = policy.base_delay * 2u32.pow(attempt);
                    tracing::warn!(attempt, ?delay, error = %err, "gateway call failed, retrying");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(err) => {
                    return Err(GatewayError::Transport {
                        retries: attempt,
                        message: err.message,
                    })
                }
            }
        }
    }

    fn log(&self, kind: CallKind, model: &str, key: String, elapsed: Duration) {
        if let Some(recorder) = &self.recorder {
            recorder.push(CallRecord {
                kind,
                model: model.to_string(),
                key,
                elapsed_secs: elapsed.as_secs_f64(),
            });
        }
    }
}
