//! Completion backends: an HTTP chat-completions client and a scripted
//! fixture player for tests and demos.

use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OBSERVATION_STOP: &str = "\nObservation:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub stop: Vec<String>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            stop: vec![OBSERVATION_STOP.to_string()],
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    fn check(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => Err(LlmError::InvalidRequest("first message must be system".into())),
            Some(_) => Ok(()),
        }
    }

    /// Content of the last user-role message (the current request or the
    /// turn's scratchpad).
    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("language model unavailable: {0}")]
    Unavailable(String),
    #[error("language model rejected credentials (HTTP {0})")]
    AuthFailure(u16),
    #[error("script fixture exhausted after {0} responses")]
    FixtureExhausted(usize),
    #[error("script entry {index} expected the prompt to contain {expected:?}")]
    FixtureMismatch { index: usize, expected: String },
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
}

pub trait CompletionBackend: Send + Sync {
    /// Raw completion; callers should go through [`complete`] for stop handling.
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError>;
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Validates the request, calls the backend and applies stop truncation.
pub fn complete(backend: &dyn CompletionBackend, req: &CompletionRequest) -> Result<String, LlmError> {
    req.check()?;
    let text = backend.complete(req)?;
    Ok(truncate_at_stop(&text, &req.stop).to_string())
}

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }

    /// Reads `LLM_BASE_URL`, `LLM_API_KEY` and `LLM_MODEL`. `None` without a base URL.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var("LLM_BASE_URL").ok().filter(|s| !s.is_empty())?;
        let model = std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into());
        let mut cfg = Self::new(base, model);
        cfg.api_key = std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty());
        Some(cfg)
    }
}

/// Blocking client for `POST {base_url}/v1/chat/completions`.
pub struct HttpBackend {
    cfg: HttpBackendConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    stop: &'a [String],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &WireRequest) -> Result<String, Attempt> {
        let mut req = self.agent.post(self.endpoint());
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Attempt::Fatal(LlmError::AuthFailure(status))),
            429 | 500..=599 => return Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(Attempt::Fatal(LlmError::Unavailable(format!("HTTP {status}: {detail}"))));
            }
        }
        let parsed: WireResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(LlmError::Unavailable(format!("bad response body: {e}"))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| Attempt::Fatal(LlmError::Unavailable("response has no choices".into())))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let body = WireRequest {
            model: &self.cfg.model,
            messages: &req.messages,
            stop: &req.stop,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let mut backoff = self.cfg.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.cfg.max_attempts.max(1) {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
            if attempt < self.cfg.max_attempts {
                thread::sleep(backoff);
                backoff = (backoff * 2).min(self.cfg.max_backoff);
            }
        }
        Err(LlmError::Unavailable(format!(
            "{} attempts failed, last error: {last}",
            self.cfg.max_attempts
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Substring that must occur in the last user-role message.
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptFixture {
    pub entries: Vec<ScriptEntry>,
}

impl ScriptFixture {
    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            entries: responses
                .into_iter()
                .map(|r| ScriptEntry {
                    pattern: None,
                    response: r.into(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Replays fixture responses strictly in order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    fixture: ScriptFixture,
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    cursor: usize,
    requests: Vec<CompletionRequest>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Self {
        Self {
            fixture,
            state: Mutex::new(ScriptState::default()),
        }
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(ScriptFixture::from_responses(responses))
    }

    pub fn calls(&self) -> usize {
        self.lock().cursor
    }

    pub fn remaining(&self) -> usize {
        self.fixture.entries.len() - self.lock().cursor
    }

    /// Every request received, including ones that failed to match.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.lock().requests.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ScriptState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let mut st = self.lock();
        st.requests.push(req.clone());
        let index = st.cursor;
        let entry = self
            .fixture
            .entries
            .get(index)
            .ok_or(LlmError::FixtureExhausted(index))?;
        if let Some(p) = &entry.pattern {
            if !req.last_user_content().contains(p.as_str()) {
                return Err(LlmError::FixtureMismatch {
                    index,
                    expected: p.clone(),
                });
            }
        }
        st.cursor += 1;
        Ok(entry.response.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(user: &str) -> CompletionRequest {
        CompletionRequest::new(vec![
            ChatMessage::new(Role::System, "sys"),
            ChatMessage::new(Role::User, user),
        ])
    }

    #[test]
    fn scripted_in_order_then_exhausted() {
        let b = ScriptedBackend::from_responses(["one", "two", "three"]);
        let r = req("hi");
        assert_eq!(complete(&b, &r).unwrap(), "one");
        assert_eq!(complete(&b, &r).unwrap(), "two");
        assert_eq!(complete(&b, &r).unwrap(), "three");
        assert_eq!(complete(&b, &r), Err(LlmError::FixtureExhausted(3)));
        assert_eq!(b.requests().len(), 4);
    }

    #[test]
    fn scripted_match_is_enforced() {
        let fixture: ScriptFixture =
            serde_json::from_str(r#"{"entries":[{"match":"heatmap","response":"ok"}]}"#).unwrap();
        let b = ScriptedBackend::new(fixture);
        assert!(matches!(complete(&b, &req("time please")), Err(LlmError::FixtureMismatch { index: 0, .. })));
        assert_eq!(b.remaining(), 1);
        assert_eq!(complete(&b, &req("show the heatmap")).unwrap(), "ok");
    }

    #[test]
    fn stop_sequence_truncates() {
        let b = ScriptedBackend::from_responses(["Thought: x\nAction: A\nAction Input: 1\nObservation: fake"]);
        assert_eq!(complete(&b, &req("q")).unwrap(), "Thought: x\nAction: A\nAction Input: 1");
    }

    #[test]
    fn earliest_stop_wins() {
        let stops = vec!["B".to_string(), "A".to_string()];
        assert_eq!(truncate_at_stop("xxAyyB", &stops), "xx");
        assert_eq!(truncate_at_stop("none", &stops), "none");
        assert_eq!(truncate_at_stop("keep", &[String::new()]), "keep");
    }

    #[test]
    fn first_message_must_be_system() {
        let b = ScriptedBackend::from_responses(["x"]);
        let bad = CompletionRequest::new(vec![ChatMessage::new(Role::User, "u")]);
        assert!(matches!(complete(&b, &bad), Err(LlmError::InvalidRequest(_))));
        assert_eq!(b.calls(), 0);
    }
}
