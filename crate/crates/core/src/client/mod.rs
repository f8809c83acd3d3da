//! Provider-agnostic chat client.
//!
//! A [`ChatClient`] wraps a [`ChatBackend`] (an HTTP adapter, a scripted stub,
//! or an audit-log replayer) and adds the global rate limit, retries and
//! transcript logging. It is `Sync` and may be shared across worker threads;
//! requests are serialized through the rate limiter. A [`Session`] is a
//! single-owner conversation borrowed from a client.

mod audit;
mod clock;
mod http;
mod stub;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditEntry, AuditLog};
pub use clock::{Clock, FakeClock, SystemClock};
pub use http::OpenAiBackend;
pub use stub::{FnBackend, ReplayBackend, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

/// Decoding settings sent with every request and recorded in traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            model: "stub".to_string(),
            temperature: 0.0,
            max_tokens: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("credential unavailable: {0}")]
    Credential(String),
    #[error("scripted stub has no replies left")]
    ScriptExhausted,
    #[error("no logged reply for this conversation")]
    ReplayMiss,
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<ModelError> },
}

impl ModelError {
    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            ModelError::Transport(_) => true,
            ModelError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Something that turns a conversation into the next assistant message.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[Message], params: &DecodingParams) -> Result<String, ModelError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 1000,
            multiplier: 2.0,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_attempts: 1,
            ..RetryPolicy::default()
        }
    }

    /// Delay before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

struct RateLimiter {
    interval: Option<Duration>,
    last: Mutex<Option<Duration>>,
}

impl RateLimiter {
    fn new(requests_per_minute: Option<u32>) -> Self {
        RateLimiter {
            interval: requests_per_minute
                .filter(|rpm| *rpm > 0)
                .map(|rpm| Duration::from_secs(60) / rpm),
            last: Mutex::new(None),
        }
    }

    /// Blocks until a request may start. The lock is held while sleeping so
    /// concurrent callers queue behind each other.
    fn acquire(&self, clock: &dyn Clock) {
        let Some(interval) = self.interval else { return };
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let ready_at = prev + interval;
            let now = clock.now();
            if ready_at > now {
                clock.sleep(ready_at - now);
            }
        }
        *last = Some(clock.now());
    }
}

pub struct ChatClient {
    backend: Box<dyn ChatBackend>,
    params: DecodingParams,
    retry: RetryPolicy,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    audit: Option<AuditLog>,
    next_session: AtomicU64,
}

impl ChatClient {
    pub fn new(backend: impl ChatBackend + 'static) -> Self {
        ChatClient {
            backend: Box::new(backend),
            params: DecodingParams::default(),
            retry: RetryPolicy::none(),
            limiter: RateLimiter::new(None),
            clock: Arc::new(SystemClock::new()),
            audit: None,
            next_session: AtomicU64::new(0),
        }
    }

    pub fn with_params(mut self, params: DecodingParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = RateLimiter::new(Some(requests_per_minute));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_audit_log(mut self, audit: AuditLog) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn params(&self) -> &DecodingParams {
        &self.params
    }

    pub fn open_session(&self, system_prompt: &str) -> Session<'_> {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        let system = Message::new(Role::System, system_prompt);
        self.log(id, 0, &system);
        Session {
            client: self,
            id,
            history: vec![system],
        }
    }

    /// A throwaway session with a single exchange.
    pub fn one_shot(&self, system_prompt: &str, message: &str) -> Result<String, ModelError> {
        self.open_session(system_prompt).send(message)
    }

    fn complete(&self, messages: &[Message]) -> Result<String, ModelError> {
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire(self.clock.as_ref());
            match self.backend.complete(messages, &self.params) {
                Ok(reply) => return Ok(reply),
                Err(err) if err.is_retryable() && attempt < max_attempts => {
                    tracing::warn!(target: "neogauge::client", attempt, error = %err, "retrying model request");
                    self.clock.sleep(self.retry.backoff(attempt));
                }
                Err(err) if err.is_retryable() && max_attempts > 1 => {
                    return Err(ModelError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(err),
                    })
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn log(&self, session: u64, turn: usize, message: &Message) {
        if let Some(audit) = &self.audit {
            let entry = AuditEntry {
                session_id: format!("s{session}"),
                turn,
                role: message.role,
                content: message.content.clone(),
                params: self.params.clone(),
                timestamp: self.clock.timestamp_ms(),
            };
            if let Err(err) = audit.append(&entry) {
                tracing::error!(target: "neogauge::client", error = %err, "audit log write failed");
            }
        }
    }
}

/// A stateful conversation. History is append-only and alternates
/// user/assistant after the system preamble.
pub struct Session<'c> {
    client: &'c ChatClient,
    id: u64,
    history: Vec<Message>,
}

impl Session<'_> {
    pub fn send(&mut self, message: &str) -> Result<String, ModelError> {
        let mut request = self.history.clone();
        request.push(Message::new(Role::User, message));
        let reply = self.client.complete(&request)?;
        let user = request.pop().expect("just pushed");
        self.client.log(self.id, self.history.len(), &user);
        self.history.push(user);
        let assistant = Message::new(Role::Assistant, reply.clone());
        self.client.log(self.id, self.history.len(), &assistant);
        self.history.push(assistant);
        Ok(reply)
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}
