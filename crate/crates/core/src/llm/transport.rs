//! Request transports: HTTP via ureq, and a fixture-driven mock.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::wire::{ChatRequest, ChatResponse, Choice, ResponseMessage, Usage};
use super::prompt_hash;

#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    Connection(String),
    Status { code: u16, body: String },
}

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportFailure::Connection(e) => write!(f, "connection error: {e}"),
            TransportFailure::Status { code, body } => {
                let snippet: String = body.chars().take(200).collect();
                write!(f, "HTTP {code}: {snippet}")
            }
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure>;

    /// Whether retries should actually sleep between attempts.
    fn sleeps(&self) -> bool {
        true
    }
}

pub struct HttpTransport {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: String, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self { endpoint: endpoint.to_string(), api_key, agent: config.into() }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request)
            .map_err(|e| TransportFailure::Connection(e.to_string()))?;
        let code = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| TransportFailure::Connection(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(TransportFailure::Status { code, body });
        }
        serde_json::from_str(&body).map_err(|e| TransportFailure::Connection(format!("malformed response body: {e}")))
    }
}

/// One scripted reply. `error` simulates a connection failure, `status` a
/// non-2xx reply; otherwise `text` is returned with `finish_reason`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default = "default_finish", skip_serializing_if = "is_stop")]
    pub finish_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn default_finish() -> String {
    "stop".into()
}

fn is_stop(s: &str) -> bool {
    s == "stop"
}

impl MockStep {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: Some(text.into()), finish_reason: default_finish(), completion_tokens: None, status: None, error: None }
    }

    pub fn truncated(text: impl Into<String>) -> Self {
        Self { finish_reason: "length".into(), ..Self::text(text) }
    }

    pub fn status(code: u16) -> Self {
        Self { text: None, status: Some(code), ..Self::text("") }
    }

    pub fn connection_error(msg: &str) -> Self {
        Self { text: None, error: Some(msg.to_string()), ..Self::text("") }
    }
}

/// Fixture file `<prompt_hash>.json` in the mock directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub steps: Vec<MockStep>,
}

impl MockFixture {
    pub fn new(steps: Vec<MockStep>) -> Self {
        Self { steps }
    }

    pub fn path_for(dir: &Path, prompt: &str) -> PathBuf {
        dir.join(format!("{}.json", prompt_hash(prompt)))
    }

    pub fn write(&self, dir: &Path, prompt: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, prompt);
        let text = serde_json::to_string_pretty(self).expect("fixture serializes");
        crate::io::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Replays fixtures keyed by the hash of the first user message. Each call
/// for a key advances its step counter; the last step repeats once the
/// script runs out. A missing key falls back to `default.json` when present.
pub struct MockTransport {
    dir: PathBuf,
    cursor: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), cursor: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    /// Total requests served, including scripted failures.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn load(&self, key: &str) -> Result<MockFixture, TransportFailure> {
        let mut path = self.dir.join(format!("{key}.json"));
        if !path.exists() {
            path = self.dir.join("default.json");
        }
        let text = std::fs::read_to_string(&path).map_err(|_| TransportFailure::Status {
            code: 404,
            body: format!("no mock fixture for prompt hash {key}"),
        })?;
        serde_json::from_str(&text).map_err(|e| TransportFailure::Status {
            code: 500,
            body: format!("bad mock fixture {}: {e}", path.display()),
        })
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let first_user = request.messages.iter().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("");
        let key = prompt_hash(first_user);
        let fixture = self.load(&key)?;
        if fixture.steps.is_empty() {
            return Err(TransportFailure::Status { code: 500, body: format!("mock fixture {key} has no steps") });
        }
        let index = {
            let mut cursor = self.cursor.lock().expect("mock cursor lock");
            let c = cursor.entry(key.clone()).or_default();
            let i = (*c).min(fixture.steps.len() - 1);
            *c += 1;
            i
        };
        let step = &fixture.steps[index];
        if let Some(e) = &step.error {
            return Err(TransportFailure::Connection(e.clone()));
        }
        if let Some(code) = step.status.filter(|c| !(200..300).contains(c)) {
            return Err(TransportFailure::Status { code, body: "scripted failure".into() });
        }
        let text = step.text.clone().unwrap_or_default();
        let prompt_tokens: u64 = request.messages.iter().map(|m| m.content.len() as u64 / 4).sum();
        let completion_tokens = step.completion_tokens.unwrap_or(text.len() as u64 / 4);
        Ok(ChatResponse {
            id: Some(format!("mock-{}-{index}", &key[..12])),
            choices: vec![Choice {
                message: ResponseMessage { role: Some("assistant".into()), content: Some(text) },
                finish_reason: Some(step.finish_reason.clone()),
            }],
            usage: Some(Usage { prompt_tokens, completion_tokens }),
        })
    }

    fn sleeps(&self) -> bool {
        false
    }
}
