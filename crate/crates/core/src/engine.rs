//! Uniform chat interface over LLM inference backends.
//!
//! Two HTTP wire protocols are supported: OpenAI-compatible chat completions
//! (OpenAI, vLLM, llama.cpp server, ...) and Ollama's `/api/chat`. A scripted
//! backend returns canned responses selected by substring rules and is used
//! for tests and offline runs.
//!
//! Every call through [`Engine::chat`] is appended to the engine's
//! [`InspectionLog`], so all prompts and outputs stay inspectable.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 4096,
            stop_sequences: Vec::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(EngineError::Precondition(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(EngineError::Precondition("max_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// Truncates `text` at the earliest stop sequence, if any occurs.
    pub fn apply_stop(&self, text: String) -> String {
        let cut = self
            .stop_sequences
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| text.find(s.as_str()))
            .min();
        match cut {
            Some(i) => text[..i].to_string(),
            None => text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    OpenaiCompatible,
    Ollama,
    Scripted,
}

impl FromStr for EngineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "openai" | "openai_compatible" => Ok(EngineKind::OpenaiCompatible),
            "ollama" => Ok(EngineKind::Ollama),
            "scripted" => Ok(EngineKind::Scripted),
            other => Err(format!("unknown engine kind {other:?}")),
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::OpenaiCompatible => "openai_compatible",
            EngineKind::Ollama => "ollama",
            EngineKind::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineDescriptor {
    pub kind: EngineKind,
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key; empty for none.
    #[serde(default)]
    pub api_key_env: String,
}

impl EngineDescriptor {
    pub fn openai_compatible(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: EngineKind::OpenaiCompatible,
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: String::new(),
        }
    }

    pub fn ollama(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: EngineKind::Ollama,
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: String::new(),
        }
    }

    pub fn scripted() -> Self {
        Self {
            kind: EngineKind::Scripted,
            base_url: String::new(),
            model: String::new(),
            api_key_env: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.kind == EngineKind::Scripted {
            return Ok(());
        }
        url::Url::parse(&self.base_url)
            .map_err(|e| EngineError::Config(format!("invalid base_url {:?}: {e}", self.base_url)))?;
        if self.model.is_empty() {
            return Err(EngineError::Config("model must not be empty".into()));
        }
        Ok(())
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    fn api_key(&self) -> Result<Option<String>, EngineError> {
        if self.api_key_env.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.api_key_env).map(Some).map_err(|_| {
            EngineError::Config(format!("environment variable {} is not set", self.api_key_env))
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid chat request: {0}")]
    Precondition(String),
    #[error("engine configuration error: {0}")]
    Config(String),
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("authentication failed (HTTP 401): {0}")]
    Auth(String),
    #[error("unexpected response shape: {0}")]
    Protocol(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("no scripted rule matched the prompt")]
    NoRuleMatched,
}

impl EngineError {
    /// True when the backend could not be reached at all (no HTTP status).
    pub fn is_unreachable(&self) -> bool {
        matches!(self, EngineError::Transport { status: None, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRequest {
    pub messages: Vec<ChatMessage>,
    pub config: GenerationConfig,
}

/// One recorded chat call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: EngineRequest,
    pub response: Result<String, String>,
}

/// Append-only record of every chat call made through an engine.
#[derive(Debug, Default)]
pub struct InspectionLog {
    entries: Mutex<Vec<Exchange>>,
}

impl InspectionLog {
    fn lock(&self) -> MutexGuard<'_, Vec<Exchange>> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn push(&self, exchange: Exchange) {
        self.lock().push(exchange);
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn snapshot(&self) -> Vec<Exchange> {
        self.lock().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(alias = "match")]
    pub matcher: String,
    pub response: String,
}

impl ScriptRule {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self { matcher: matcher.into(), response: response.into() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 1, backoff: Duration::from_secs(1) }
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), EngineError> {
    let last = messages
        .last()
        .ok_or_else(|| EngineError::Precondition("messages must not be empty".into()))?;
    if last.role != Role::User {
        return Err(EngineError::Precondition("last message must have role user".into()));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::System && m.content.is_empty())
    {
        return Err(EngineError::Precondition(format!(
            "{} message content must not be empty",
            m.role.as_str()
        )));
    }
    Ok(())
}

fn nonempty(text: String) -> Result<String, EngineError> {
    if text.is_empty() {
        Err(EngineError::EmptyCompletion)
    } else {
        Ok(text)
    }
}

fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<Value, EngineError> {
    let mut req = agent.post(url).set("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.set("Authorization", &format!("Bearer {key}"));
    }
    match req.send_string(&body.to_string()) {
        Ok(resp) => {
            let text = resp.into_string().map_err(|e| EngineError::Transport {
                status: None,
                message: format!("reading response body: {e}"),
            })?;
            serde_json::from_str(&text)
                .map_err(|e| EngineError::Protocol(format!("response is not JSON ({e}): {text}")))
        }
        Err(ureq::Error::Status(401, resp)) => Err(EngineError::Auth(resp.into_string().unwrap_or_default())),
        Err(ureq::Error::Status(code, resp)) => Err(EngineError::Transport {
            status: Some(code),
            message: resp.into_string().unwrap_or_default(),
        }),
        Err(ureq::Error::Transport(t)) => Err(EngineError::Transport {
            status: None,
            message: t.to_string(),
        }),
    }
}

fn wire_messages(messages: &[ChatMessage]) -> Value {
    Value::Array(
        messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect(),
    )
}

/// Request body for `POST {base_url}/chat/completions`.
pub fn openai_request_body(descriptor: &EngineDescriptor, messages: &[ChatMessage], config: &GenerationConfig) -> Value {
    let mut body = json!({
        "model": descriptor.model,
        "messages": wire_messages(messages),
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    });
    if !config.stop_sequences.is_empty() {
        body["stop"] = json!(config.stop_sequences);
    }
    body
}

/// Request body for Ollama's `POST {base_url}/api/chat`.
pub fn ollama_request_body(descriptor: &EngineDescriptor, messages: &[ChatMessage], config: &GenerationConfig) -> Value {
    let mut options = json!({
        "temperature": config.temperature,
        "num_predict": config.max_tokens,
    });
    if !config.stop_sequences.is_empty() {
        options["stop"] = json!(config.stop_sequences);
    }
    json!({
        "model": descriptor.model,
        "messages": wire_messages(messages),
        "stream": false,
        "options": options,
    })
}

pub fn chat_openai_compatible(
    agent: &ureq::Agent,
    descriptor: &EngineDescriptor,
    messages: &[ChatMessage],
    config: &GenerationConfig,
) -> Result<String, EngineError> {
    if descriptor.kind != EngineKind::OpenaiCompatible {
        return Err(EngineError::Config(format!("expected openai_compatible, got {}", descriptor.kind)));
    }
    let key = descriptor.api_key()?;
    let body = openai_request_body(descriptor, messages, config);
    let resp = post_json(agent, &descriptor.endpoint("chat/completions"), key.as_deref(), &body)?;
    let content = resp
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| EngineError::Protocol(format!("missing choices[0].message.content in {resp}")))?;
    nonempty(config.apply_stop(content.to_string()))
}

pub fn chat_ollama(
    agent: &ureq::Agent,
    descriptor: &EngineDescriptor,
    messages: &[ChatMessage],
    config: &GenerationConfig,
) -> Result<String, EngineError> {
    if descriptor.kind != EngineKind::Ollama {
        return Err(EngineError::Config(format!("expected ollama, got {}", descriptor.kind)));
    }
    let key = descriptor.api_key()?;
    let body = ollama_request_body(descriptor, messages, config);
    let resp = post_json(agent, &descriptor.endpoint("api/chat"), key.as_deref(), &body)?;
    let content = resp
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| EngineError::Protocol(format!("missing message.content in {resp}")))?;
    nonempty(config.apply_stop(content.to_string()))
}

/// First rule whose matcher occurs in the newline-joined message contents.
pub fn scripted_chat(
    rules: &[ScriptRule],
    messages: &[ChatMessage],
    config: &GenerationConfig,
) -> Result<String, EngineError> {
    let prompt = messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    let rule = rules
        .iter()
        .find(|r| prompt.contains(r.matcher.as_str()))
        .ok_or(EngineError::NoRuleMatched)?;
    nonempty(config.apply_stop(rule.response.clone()))
}

enum Backend {
    Http(ureq::Agent),
    Scripted(Vec<ScriptRule>),
}

/// A configured backend plus its call counter and inspection log. Safe to
/// share between threads.
pub struct Engine {
    descriptor: EngineDescriptor,
    backend: Backend,
    retry: RetryPolicy,
    calls: AtomicUsize,
    log: InspectionLog,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("descriptor", &self.descriptor)
            .field("calls", &self.call_count())
            .finish()
    }
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

impl Engine {
    /// Builds an HTTP-backed engine. Scripted descriptors need
    /// [`Engine::scripted`] instead, since they carry rules.
    pub fn from_descriptor(descriptor: EngineDescriptor) -> Result<Self, EngineError> {
        Self::with_timeout(descriptor, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(descriptor: EngineDescriptor, timeout: Duration) -> Result<Self, EngineError> {
        descriptor.validate()?;
        if descriptor.kind == EngineKind::Scripted {
            return Err(EngineError::Config("scripted engines are built from rules".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(Self {
            descriptor,
            backend: Backend::Http(agent),
            retry: RetryPolicy::default(),
            calls: AtomicUsize::new(0),
            log: InspectionLog::default(),
        })
    }

    pub fn scripted(rules: Vec<ScriptRule>) -> Result<Self, EngineError> {
        if rules.is_empty() {
            return Err(EngineError::Config("scripted engine needs at least one rule".into()));
        }
        Ok(Self {
            descriptor: EngineDescriptor::scripted(),
            backend: Backend::Scripted(rules),
            retry: RetryPolicy { retries: 0, backoff: Duration::ZERO },
            calls: AtomicUsize::new(0),
            log: InspectionLog::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn descriptor(&self) -> &EngineDescriptor {
        &self.descriptor
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inspection_log(&self) -> &InspectionLog {
        &self.log
    }

    /// Sends `messages` and returns the assistant text. Transport errors are
    /// retried per the engine's [`RetryPolicy`]; other errors are not.
    pub fn chat(&self, messages: &[ChatMessage], config: &GenerationConfig) -> Result<String, EngineError> {
        check_messages(messages)?;
        config.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);

        let mut attempt = 0;
        let result = loop {
            let result = self.dispatch(messages, config);
            match &result {
                Err(EngineError::Transport { .. }) if attempt < self.retry.retries => {
                    attempt += 1;
                    log::warn!("transport error, retrying in {:?}", self.retry.backoff);
                    std::thread::sleep(self.retry.backoff);
                }
                _ => break result,
            }
        };

        self.log.push(Exchange {
            request: EngineRequest {
                messages: messages.to_vec(),
                config: config.clone(),
            },
            response: result.clone().map_err(|e| e.to_string()),
        });
        result
    }

    fn dispatch(&self, messages: &[ChatMessage], config: &GenerationConfig) -> Result<String, EngineError> {
        match (&self.backend, self.descriptor.kind) {
            (Backend::Scripted(rules), _) => scripted_chat(rules, messages, config),
            (Backend::Http(agent), EngineKind::Ollama) => chat_ollama(agent, &self.descriptor, messages, config),
            (Backend::Http(agent), _) => chat_openai_compatible(agent, &self.descriptor, messages, config),
        }
    }
}
