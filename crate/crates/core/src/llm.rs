//! Text-completion backends.
//!
//! Every prompt in the pipeline is sent as a single user message. Two
//! backends implement [`LlmBackend`]: [`MockBackend`], which answers from an
//! ordered script, and [`HttpBackend`], which speaks the OpenAI-compatible
//! `/chat/completions` protocol.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the API key for [`HttpBackend`].
pub const API_KEY_ENV: &str = "PERPILOT_API_KEY";

pub const DEFAULT_MODEL: &str = "o4-mini-2025-04-16";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

/// Retries after the first attempt on transport failures.
pub const MAX_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("invalid llm config: {0}")]
    InvalidConfig(String),
    #[error("no script entry matches prompt")]
    NoScriptEntry,
    #[error("strict mock: no script entry matches prompt starting with {prefix:?}")]
    StrictMiss { prefix: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("model returned empty output")]
    EmptyOutput,
    #[error("cannot read mock script {path}: {message}")]
    Script { path: String, message: String },
}

/// API key wrapper that never prints its value.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .map(ApiKey)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: i64,
    pub endpoint: String,
    pub api_key: Option<ApiKey>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: 4096,
            seed: 1234,
            endpoint: DEFAULT_ENDPOINT.to_string(),
            api_key: None,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// A text-completion service. Implementations are shared across threads.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, config: &LlmConfig) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact(String),
    Contains(String),
}

impl Matcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Exact(s) => prompt == s,
            Matcher::Contains(s) => prompt.contains(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
}

/// Ordered matcher/response pairs. The first matching entry answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub entries: Vec<ScriptEntry>,
    /// Answer for unmatched prompts in lenient mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exact(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.push(Matcher::Exact(prompt.into()), response);
        self
    }

    pub fn contains(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.push(Matcher::Contains(needle.into()), response);
        self
    }

    pub fn push(&mut self, matcher: Matcher, response: impl Into<String>) {
        self.entries.push(ScriptEntry {
            matcher,
            response: response.into(),
        });
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.matcher.matches(prompt))
            .map(|e| e.response.as_str())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let err = |message: String| LlmError::Script {
            path: path.display().to_string(),
            message,
        };
        let source = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&source).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("script serializes");
        fs::write(path, json + "\n")
    }
}

/// Scripted backend. Lookups never consume entries, so replaying the same
/// prompts yields the same answers.
#[derive(Debug, Default)]
pub struct MockBackend {
    script: MockScript,
    strict: bool,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            strict: false,
            calls: AtomicU64::new(0),
        }
    }

    pub fn strict(script: MockScript) -> Self {
        MockBackend {
            strict: true,
            ..MockBackend::new(script)
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str, config: &LlmConfig) -> Result<String, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        config.validate()?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let response = match self.script.lookup(prompt) {
            Some(r) => r,
            None if self.strict => {
                return Err(LlmError::StrictMiss {
                    prefix: prompt.chars().take(80).collect(),
                })
            }
            None => self.script.fallback.as_deref().ok_or(LlmError::NoScriptEntry)?,
        };
        if response.trim().is_empty() {
            return Err(LlmError::EmptyOutput);
        }
        Ok(response.to_string())
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    seed: i64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// OpenAI-compatible chat-completion client (blocking).
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    retry_delay: Duration,
    requests: AtomicU64,
}

impl HttpBackend {
    pub fn new() -> Result<Self, LlmError> {
        Self::with_timeout(Duration::from_secs(120))
    }

    pub fn with_timeout(timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpBackend {
            client,
            retry_delay: Duration::from_millis(500),
            requests: AtomicU64::new(0),
        })
    }

    /// Base delay between retries; the n-th retry waits `n * delay`.
    pub fn retry_delay(mut self, delay: Duration) -> Self {
        self.retry_delay = delay;
        self
    }

    /// Number of HTTP requests sent, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn url(endpoint: &str) -> String {
        format!("{}/chat/completions", endpoint.trim_end_matches('/'))
    }

    fn send_once(&self, url: &str, body: &ChatRequest<'_>, key: Option<&ApiKey>) -> Attempt {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut request = self.client.post(url).json(body);
        if let Some(key) = key {
            request = request.bearer_auth(key.expose());
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        if status.is_server_error() {
            return Attempt::Retry(LlmError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        if !status.is_success() {
            return Attempt::Fail(LlmError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        Attempt::Done(extract_content(&text))
    }
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(LlmError),
    Fail(LlmError),
}

/// Pulls `choices[0].message.content` out of a chat-completion body.
pub fn extract_content(body: &str) -> Result<String, LlmError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))?
        .message
        .content
        .unwrap_or_default();
    if content.trim().is_empty() {
        return Err(LlmError::EmptyOutput);
    }
    Ok(content)
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str, config: &LlmConfig) -> Result<String, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        config.validate()?;
        let body = ChatRequest {
            model: &config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            seed: config.seed,
        };
        let url = Self::url(&config.endpoint);
        let mut attempt = 0;
        loop {
            match self.send_once(&url, &body, config.api_key.as_ref()) {
                Attempt::Done(result) => return result,
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= MAX_RETRIES => return Err(e),
                Attempt::Retry(_) => {
                    attempt += 1;
                    std::thread::sleep(self.retry_delay * attempt);
                }
            }
        }
    }
}
