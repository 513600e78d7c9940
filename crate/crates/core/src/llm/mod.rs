//! Chat-completion client with retries, token-budget escalation, cost
//! accounting and a fixture-driven mock provider.

mod extract;
mod transport;
mod wire;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::extract_scenario_json;
pub use transport::{HttpTransport, MockFixture, MockStep, MockTransport, Transport, TransportFailure};
pub use wire::{ChatMessage, ChatRequest, ChatResponse, Choice, ResponseMessage, Usage};

use crate::model::Scenario;

pub const DEFAULT_API_KEY_ENV: &str = "ATG_API_KEY";
const TRANSPORT_ATTEMPTS: u32 = 3;

/// Hex SHA-256 of a prompt; keys mock fixtures and result-store cells.
pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("transport failed after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("no valid scenario in response: {}", .0.join(" | "))]
    NoValidScenario(Vec<String>),
    #[error("token budget exhausted at cap {cap} (budgets tried: {budgets:?})")]
    BudgetExhausted { cap: u32, budgets: Vec<u32> },
    #[error("invalid provider config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Label used in tables; defaults to `model`.
    pub name: String,
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: f64,
    /// Send `top_k` only when the endpoint accepts it.
    pub supports_top_k: bool,
    pub max_tokens: u32,
    pub escalation_step: u32,
    pub escalation_cap: u32,
    /// USD per million output tokens.
    pub price_per_mtok: Option<f64>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Extra top-level request fields, passed through verbatim.
    pub extra_body: Map<String, Value>,
    /// Fixture directory for the mock provider.
    pub fixtures: Option<PathBuf>,
    pub max_inflight: usize,
    pub timeout_secs: u64,
    pub retry_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            kind: ProviderKind::Http,
            endpoint: "https://openrouter.ai/api/v1/chat/completions".into(),
            model: String::new(),
            temperature: 1.0,
            top_p: 1.0,
            top_k: 0.0,
            supports_top_k: false,
            max_tokens: 35_000,
            escalation_step: 10_000,
            escalation_cap: 50_000,
            price_per_mtok: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            extra_body: Map::new(),
            fixtures: None,
            max_inflight: 4,
            timeout_secs: 900,
            retry_base_ms: 1000,
        }
    }
}

impl ProviderConfig {
    pub fn mock(name: &str, fixtures: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            model: name.into(),
            kind: ProviderKind::Mock,
            fixtures: Some(fixtures.into()),
            ..Self::default()
        }
    }

    pub fn label(&self) -> &str {
        if self.name.is_empty() {
            &self.model
        } else {
            &self.name
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.label().is_empty() {
            return Err(LlmError::Config("model id is empty".into()));
        }
        if self.max_tokens == 0 || self.max_tokens > self.escalation_cap {
            return Err(LlmError::Config(format!(
                "max_tokens {} must be in (0, cap {}]",
                self.max_tokens, self.escalation_cap
            )));
        }
        if self.escalation_step == 0 {
            return Err(LlmError::Config("escalation_step must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(LlmError::Config("max_inflight must be at least 1".into()));
        }
        if self.kind == ProviderKind::Mock && self.fixtures.is_none() {
            return Err(LlmError::Config("mock provider needs a fixtures directory".into()));
        }
        Ok(())
    }

    pub fn cost(&self, completion_tokens: u64) -> Option<f64> {
        self.price_per_mtok.map(|p| completion_tokens as f64 * p / 1e6)
    }
}

/// `{ "models": [ProviderConfig, ...] }`
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelsFile {
    pub models: Vec<ProviderConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Truncated,
    FormatError,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub request_id: String,
    pub prompt_hash: String,
    pub max_tokens: u32,
    pub attempt: u32,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: Option<f64>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Inflight {
    max: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

struct InflightGuard<'a>(&'a Inflight);

impl Inflight {
    fn acquire(&self) -> InflightGuard<'_> {
        let mut n = self.count.lock().expect("inflight lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("inflight lock");
        }
        *n += 1;
        InflightGuard(self)
    }
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("inflight lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared pause after a 429 so every worker on the provider backs off.
#[derive(Debug, Default)]
struct RateGate {
    until: Mutex<Option<Instant>>,
}

impl RateGate {
    fn wait(&self) {
        let until = *self.until.lock().expect("rate gate lock");
        if let Some(t) = until {
            let now = Instant::now();
            if t > now {
                std::thread::sleep(t - now);
            }
        }
    }

    fn pause(&self, d: Duration) {
        let mut until = self.until.lock().expect("rate gate lock");
        let t = Instant::now() + d;
        if until.is_none_or(|u| u < t) {
            *until = Some(t);
        }
    }
}

/// A provider config bound to a transport. Cheap to clone; clones share the
/// in-flight limit and rate gate.
#[derive(Clone)]
pub struct Client {
    pub cfg: ProviderConfig,
    transport: Arc<dyn Transport>,
    inflight: Arc<Inflight>,
    gate: Arc<RateGate>,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(cfg: ProviderConfig, transport: Arc<dyn Transport>) -> Self {
        let max = cfg.max_inflight.max(1);
        Self {
            cfg,
            transport,
            inflight: Arc::new(Inflight { max, count: Mutex::new(0), freed: Condvar::new() }),
            gate: Arc::new(RateGate::default()),
        }
    }

    /// Builds the transport named by `cfg.kind`. HTTP providers read their key
    /// from the configured environment variable.
    pub fn from_config(cfg: ProviderConfig) -> Result<Self, LlmError> {
        cfg.validate()?;
        let transport: Arc<dyn Transport> = match cfg.kind {
            ProviderKind::Mock => Arc::new(MockTransport::new(cfg.fixtures.clone().expect("validated"))),
            ProviderKind::Http => {
                let key = std::env::var(&cfg.api_key_env)
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| LlmError::MissingCredential(cfg.api_key_env.clone()))?;
                Arc::new(HttpTransport::new(&cfg.endpoint, key, Duration::from_secs(cfg.timeout_secs)))
            }
        };
        Ok(Self::new(cfg, transport))
    }

    pub fn request(&self, messages: &[ChatMessage], max_tokens: u32) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model.clone(),
            messages: messages.to_vec(),
            temperature: self.cfg.temperature,
            top_p: self.cfg.top_p,
            top_k: self.cfg.supports_top_k.then_some(self.cfg.top_k),
            max_tokens,
            extra: self.cfg.extra_body.clone(),
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        if self.transport.sleeps() {
            Duration::from_millis(self.cfg.retry_base_ms.saturating_mul(1 << attempt))
        } else {
            Duration::ZERO
        }
    }

    /// One completion, retrying connection errors, 429 and 5xx up to three
    /// attempts in total. 401/403 fail immediately.
    pub fn complete(&self, messages: &[ChatMessage], max_tokens: u32) -> Result<CompletionRecord, LlmError> {
        let first_user = messages.iter().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("");
        let hash = prompt_hash(first_user);
        let request = self.request(messages, max_tokens);
        let mut last = String::new();
        for attempt in 0..TRANSPORT_ATTEMPTS {
            self.gate.wait();
            let result = {
                let _slot = self.inflight.acquire();
                self.transport.send(&request)
            };
            match result {
                Ok(response) => {
                    let usage = response.usage.clone().unwrap_or_default();
                    let text = response.text().unwrap_or_default().to_string();
                    let outcome = if response.finish_reason() == Some("length") { Outcome::Truncated } else { Outcome::Ok };
                    return Ok(CompletionRecord {
                        request_id: response.id.clone().unwrap_or_else(|| format!("{}-{max_tokens}-{attempt}", &hash[..12])),
                        prompt_hash: hash,
                        max_tokens,
                        attempt: attempt + 1,
                        text,
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens,
                        cost_usd: self.cfg.cost(usage.completion_tokens),
                        outcome,
                        error: None,
                    });
                }
                Err(TransportFailure::Status { code: code @ (401 | 403), .. }) => return Err(LlmError::Auth { status: code }),
                Err(failure) => {
                    let retryable = match &failure {
                        TransportFailure::Connection(_) => true,
                        TransportFailure::Status { code, .. } => *code == 429 || *code >= 500,
                    };
                    last = failure.to_string();
                    if !retryable {
                        return Err(LlmError::Transport { attempts: attempt + 1, detail: last });
                    }
                    let wait = self.backoff(attempt);
                    if matches!(failure, TransportFailure::Status { code: 429, .. }) {
                        self.gate.pause(wait);
                    }
                    warn!("{}: attempt {} failed: {last}", self.cfg.label(), attempt + 1);
                    if attempt + 1 < TRANSPORT_ATTEMPTS && !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                }
            }
        }
        Err(LlmError::Transport { attempts: TRANSPORT_ATTEMPTS, detail: last })
    }

    /// Completes and parses a scenario, raising the token budget by
    /// `escalation_step` (up to the cap) after truncated or unparseable
    /// replies.
    pub fn complete_with_escalation(&self, messages: &[ChatMessage]) -> Result<Escalated, EscalationFailure> {
        let mut history = Vec::new();
        let mut budget = self.cfg.max_tokens;
        loop {
            let mut record = match self.complete(messages, budget) {
                Ok(r) => r,
                Err(error) => return Err(EscalationFailure { error, history }),
            };
            if record.outcome == Outcome::Ok {
                match extract_scenario_json(&record.text) {
                    Ok(scenario) => {
                        history.push(record);
                        return Ok(Escalated { scenario, history });
                    }
                    Err(e) => {
                        record.outcome = Outcome::FormatError;
                        record.error = Some(e.to_string());
                    }
                }
            }
            debug!("{}: {:?} at budget {budget}", self.cfg.label(), record.outcome);
            history.push(record);
            if budget >= self.cfg.escalation_cap {
                let budgets = history.iter().map(|r| r.max_tokens).collect();
                return Err(EscalationFailure {
                    error: LlmError::BudgetExhausted { cap: self.cfg.escalation_cap, budgets },
                    history,
                });
            }
            budget = (budget + self.cfg.escalation_step).min(self.cfg.escalation_cap);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Escalated {
    pub scenario: Scenario,
    pub history: Vec<CompletionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationFailure {
    pub error: LlmError,
    pub history: Vec<CompletionRecord>,
}

/// Sum of per-attempt costs; `None` when no attempt has a price.
pub fn total_cost(history: &[CompletionRecord]) -> Option<f64> {
    history.iter().filter_map(|r| r.cost_usd).reduce(|a, b| a + b)
}
