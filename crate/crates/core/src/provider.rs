//! Text-generation backends: recorded replay, scripted queue, and a live
//! chat-completions client.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("replay-miss: no recorded response for prompt hash {key}")]
    ReplayMiss { key: String },
    #[error("queue-exhausted: scripted provider has no responses left")]
    QueueExhausted,
    #[error("backend-unreachable: {0}")]
    BackendUnreachable(String),
    #[error("rate-limited: gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("response-too-long: {0}")]
    ResponseTooLong(String),
    #[error("backend-error: status {status}: {message}")]
    Backend { status: u16, message: String },
    #[error("invalid-request: {0}")]
    InvalidRequest(String),
    #[error("duplicate-key: prompt hash {0} appears more than once in the fixture")]
    DuplicateKey(String),
    #[error("fixture-error: {0}")]
    Fixture(String),
    #[error("write-failure: {0}")]
    WriteFailure(String),
    #[error("configuration: {0}")]
    Configuration(String),
}

impl ProviderError {
    pub fn name(&self) -> &'static str {
        match self {
            ProviderError::ReplayMiss { .. } => "replay-miss",
            ProviderError::QueueExhausted => "queue-exhausted",
            ProviderError::BackendUnreachable(_) => "backend-unreachable",
            ProviderError::RateLimited { .. } => "rate-limited",
            ProviderError::ResponseTooLong(_) => "response-too-long",
            ProviderError::Backend { .. } => "backend-error",
            ProviderError::InvalidRequest(_) => "invalid-request",
            ProviderError::DuplicateKey(_) => "duplicate-key",
            ProviderError::Fixture(_) => "fixture-error",
            ProviderError::WriteFailure(_) => "write-failure",
            ProviderError::Configuration(_) => "configuration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model: String,
}

impl GenerationRequest {
    pub fn new(prompt: &str) -> Self {
        Self {
            prompt: prompt.to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_TOKENS,
            model: DEFAULT_MODEL.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.prompt.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} must be a non-negative number",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("model name is empty".into()));
        }
        Ok(())
    }
}

pub trait Provider: Send + Sync {
    /// Recorded on every response this provider produces.
    fn id(&self) -> String;

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        (**self).generate(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        (**self).generate(request)
    }
}

/// Trims and collapses internal whitespace. Case is kept.
pub fn normalize_prompt(prompt: &str) -> String {
    prompt.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replay key: sha256 hex of the normalized prompt.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(normalize_prompt(prompt).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub provider: String,
    pub recorded_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRecord {
    pub key: String,
    /// Kept for readability; the key alone drives lookup.
    pub prompt: String,
    pub response: String,
    pub metadata: RecordMetadata,
}

impl ProviderRecord {
    pub fn new(prompt: &str, response: &str, provider: &str, recorded_at: &str) -> Self {
        Self {
            key: prompt_key(prompt),
            prompt: normalize_prompt(prompt),
            response: response.to_string(),
            metadata: RecordMetadata {
                provider: provider.to_string(),
                recorded_at: recorded_at.to_string(),
            },
        }
    }
}

/// Answers from a fixture of recorded responses. Never touches the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    records: BTreeMap<String, ProviderRecord>,
}

impl ReplayProvider {
    pub fn from_records(records: Vec<ProviderRecord>) -> Result<Self, ProviderError> {
        let mut map = BTreeMap::new();
        for record in records {
            if map.contains_key(&record.key) {
                return Err(ProviderError::DuplicateKey(record.key));
            }
            map.insert(record.key.clone(), record);
        }
        Ok(Self { records: map })
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let records: Vec<ProviderRecord> =
            serde_json::from_str(text).map_err(|e| ProviderError::Fixture(e.to_string()))?;
        for r in &records {
            if r.key != prompt_key(&r.prompt) {
                return Err(ProviderError::Fixture(format!(
                    "record key {} does not match the hash of its prompt",
                    r.key
                )));
            }
        }
        Self::from_records(records)
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ProviderRecord> {
        self.records.values()
    }
}

impl Provider for ReplayProvider {
    fn id(&self) -> String {
        "replay".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let key = prompt_key(&request.prompt);
        self.records
            .get(&key)
            .map(|r| r.response.clone())
            .ok_or(ProviderError::ReplayMiss { key })
    }
}

/// Hands out queued responses in order, whatever the prompt.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedProvider {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
        }
    }

    /// Loads a JSON array of response strings, served in order.
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Fixture(format!("{}: {e}", path.display())))?;
        let responses: Vec<String> =
            serde_json::from_str(&text).map_err(|e| ProviderError::Fixture(e.to_string()))?;
        Ok(Self::new(responses))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        request.validate()?;
        self.queue
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(ProviderError::QueueExhausted)
    }
}

/// Wraps a provider and keeps every exchange as a fixture record.
pub struct RecordingProvider<P> {
    inner: P,
    recorded_at: String,
    records: Mutex<Vec<ProviderRecord>>,
}

impl<P: Provider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self::with_timestamp(inner, &format!("unix:{secs}"))
    }

    pub fn with_timestamp(inner: P, recorded_at: &str) -> Self {
        Self {
            inner,
            recorded_at: recorded_at.to_string(),
            records: Mutex::new(Vec::new()),
        }
    }

    /// Records in call order; a prompt asked twice is stored once.
    pub fn records(&self) -> Vec<ProviderRecord> {
        let mut seen = std::collections::BTreeSet::new();
        self.records
            .lock()
            .unwrap()
            .iter()
            .filter(|r| seen.insert(r.key.clone()))
            .cloned()
            .collect()
    }

    pub fn fixture_json(&self) -> String {
        serde_json::to_string_pretty(&self.records()).expect("records serialize") + "\n"
    }

    pub fn write_fixture(&self, path: &Path) -> Result<(), ProviderError> {
        std::fs::write(path, self.fixture_json())
            .map_err(|e| ProviderError::WriteFailure(format!("{}: {e}", path.display())))
    }
}

impl<P: Provider> Provider for RecordingProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        let response = self.inner.generate(request)?;
        self.records.lock().unwrap().push(ProviderRecord::new(
            &request.prompt,
            &response,
            &self.inner.id(),
            &self.recorded_at,
        ));
        Ok(response)
    }
}

static NETWORK_ATTEMPTS: AtomicUsize = AtomicUsize::new(0);

/// Outbound HTTP attempts made by live providers in this process.
pub fn network_attempts() -> usize {
    NETWORK_ATTEMPTS.load(Ordering::SeqCst)
}

/// Token bucket shared by every live provider in the process.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// First caller fixes the rate for the whole process.
    pub fn global(requests_per_minute: u32) -> Arc<RateLimiter> {
        static GLOBAL: OnceLock<Arc<RateLimiter>> = OnceLock::new();
        GLOBAL
            .get_or_init(|| Arc::new(RateLimiter::per_minute(requests_per_minute)))
            .clone()
    }

    /// Time to wait before a token is available; takes it when zero.
    fn try_take(&self) -> Duration {
        let mut state = self.state.lock().unwrap();
        let now = Instant::now();
        let (tokens, last) = *state;
        let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(self.capacity);
        if tokens >= 1.0 {
            *state = (tokens - 1.0, now);
            Duration::ZERO
        } else {
            *state = (tokens, now);
            Duration::from_secs_f64((1.0 - tokens) / self.per_second)
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = self.try_take();
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub requests_per_minute: u32,
    /// Responses longer than this many characters are rejected.
    pub max_response_chars: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: String::new(),
            model: DEFAULT_MODEL.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_TOKENS,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            requests_per_minute: 60,
            max_response_chars: 32_000,
        }
    }
}

impl LiveConfig {
    /// Reads `LLM_API_KEY`, `LLM_BASE_URL`, `LLM_MODEL` and
    /// `LLM_TIMEOUT_SECS`. The key is required.
    pub fn from_env() -> Result<Self, ProviderError> {
        let mut config = Self {
            api_key: std::env::var("LLM_API_KEY")
                .map_err(|_| ProviderError::Configuration("LLM_API_KEY is not set".into()))?,
            ..Self::default()
        };
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            config.base_url = url;
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            config.model = model;
        }
        if let Ok(secs) = std::env::var("LLM_TIMEOUT_SECS") {
            let secs: u64 = secs
                .parse()
                .map_err(|_| ProviderError::Configuration(format!("LLM_TIMEOUT_SECS `{secs}` is not a number")))?;
            config.timeout = Duration::from_secs(secs);
        }
        Ok(config)
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
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatReply {
    content: Option<String>,
}

enum Attempt {
    Retry(ProviderError),
    Fail(ProviderError),
}

/// Chat-completions client (`POST {base}/chat/completions`, bearer auth).
pub struct LiveProvider {
    config: LiveConfig,
    client: reqwest::blocking::Client,
    limiter: Arc<RateLimiter>,
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, ProviderError> {
        let limiter = RateLimiter::global(config.requests_per_minute);
        Self::with_limiter(config, limiter)
    }

    pub fn with_limiter(config: LiveConfig, limiter: Arc<RateLimiter>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Configuration(e.to_string()))?;
        Ok(Self {
            config,
            client,
            limiter,
        })
    }

    pub fn request(&self, prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.to_string(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
            model: self.config.model.clone(),
        }
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<String, Attempt> {
        self.limiter.acquire();
        NETWORK_ATTEMPTS.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &request.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.config.api_key)
            .json(&body)
            .send()
            .map_err(|e| Attempt::Retry(ProviderError::BackendUnreachable(e.to_string())))?;

        let status = response.status();
        if status.as_u16() == 429 {
            return Err(Attempt::Retry(ProviderError::RateLimited { attempts: 0 }));
        }
        if status.is_server_error() {
            return Err(Attempt::Retry(ProviderError::BackendUnreachable(format!(
                "server returned {status}"
            ))));
        }
        if !status.is_success() {
            let message = response.text().unwrap_or_default();
            return Err(Attempt::Fail(ProviderError::Backend {
                status: status.as_u16(),
                message,
            }));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| Attempt::Fail(ProviderError::Backend { status: status.as_u16(), message: e.to_string() }))?;
        let choice = parsed.choices.into_iter().next().ok_or_else(|| {
            Attempt::Fail(ProviderError::Backend {
                status: status.as_u16(),
                message: "response has no choices".into(),
            })
        })?;
        if choice.finish_reason.as_deref() == Some("length") {
            return Err(Attempt::Fail(ProviderError::ResponseTooLong(format!(
                "stopped at the {}-token limit",
                request.max_output_tokens
            ))));
        }
        let text = choice.message.content.unwrap_or_default();
        if text.chars().count() > self.config.max_response_chars {
            return Err(Attempt::Fail(ProviderError::ResponseTooLong(format!(
                "{} characters exceeds {}",
                text.chars().count(),
                self.config.max_response_chars
            ))));
        }
        Ok(text)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_base.saturating_mul(1 << retry.min(16));
        let jitter = rand::rng().random_range(0.0..=0.5);
        base.mul_f64(1.0 + jitter)
    }
}

impl Provider for LiveProvider {
    fn id(&self) -> String {
        format!("live:{}", self.config.model)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let mut retries = 0;
        loop {
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fail(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if retries >= self.config.max_retries {
                        return Err(match e {
                            ProviderError::RateLimited { .. } => ProviderError::RateLimited {
                                attempts: retries + 1,
                            },
                            other => other,
                        });
                    }
                    std::thread::sleep(self.backoff(retries));
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_keeps_case() {
        assert_eq!(normalize_prompt("  Comment   the\n paragraph "), "Comment the paragraph");
        assert_eq!(prompt_key("a  b"), prompt_key(" a b"));
        assert_ne!(prompt_key("A b"), prompt_key("a b"));
        assert_eq!(prompt_key("x").len(), 64);
    }

    #[test]
    fn replay_hit_and_miss() {
        let p = ReplayProvider::from_records(vec![ProviderRecord::new("Hello  there", "hi", "test", "t0")]).unwrap();
        assert_eq!(p.generate(&GenerationRequest::new("Hello there")).unwrap(), "hi");
        let err = p.generate(&GenerationRequest::new("unseen")).unwrap_err();
        assert_eq!(err, ProviderError::ReplayMiss { key: prompt_key("unseen") });
        assert!(err.to_string().contains(&prompt_key("unseen")));
    }

    #[test]
    fn duplicate_keys_fail_to_load() {
        let records = vec![
            ProviderRecord::new("p", "one", "test", "t0"),
            ProviderRecord::new(" p ", "two", "test", "t0"),
        ];
        assert_eq!(ReplayProvider::from_records(records).unwrap_err().name(), "duplicate-key");
    }

    #[test]
    fn tampered_key_fails_to_load() {
        let mut r = ProviderRecord::new("p", "one", "test", "t0");
        r.key = prompt_key("q");
        let json = serde_json::to_string(&vec![r]).unwrap();
        assert_eq!(ReplayProvider::from_json(&json).unwrap_err().name(), "fixture-error");
    }

    #[test]
    fn scripted_is_fifo() {
        let p = ScriptedProvider::new(["r1", "r2"]);
        let req = GenerationRequest::new("anything");
        assert_eq!(p.generate(&req).unwrap(), "r1");
        assert_eq!(p.generate(&req).unwrap(), "r2");
        assert_eq!(p.generate(&req).unwrap_err(), ProviderError::QueueExhausted);
    }

    #[test]
    fn request_validation() {
        let mut req = GenerationRequest::new("  ");
        assert_eq!(req.validate().unwrap_err().name(), "invalid-request");
        req.prompt = "ok".into();
        req.temperature = -0.1;
        assert!(req.validate().is_err());
        req.temperature = 0.0;
        req.max_output_tokens = 0;
        assert!(req.validate().is_err());
    }

    #[test]
    fn record_then_replay() {
        let rec = RecordingProvider::with_timestamp(ScriptedProvider::new(["first", "second"]), "t0");
        rec.generate(&GenerationRequest::new("q1")).unwrap();
        rec.generate(&GenerationRequest::new("q2")).unwrap();
        let replay = ReplayProvider::from_json(&rec.fixture_json()).unwrap();
        assert_eq!(replay.generate(&GenerationRequest::new("q2")).unwrap(), "second");
        assert_eq!(replay.records().next().unwrap().metadata.provider, "scripted");
    }

    #[test]
    fn bucket_refills() {
        let limiter = RateLimiter::per_minute(6000);
        for _ in 0..6000 {
            assert!(limiter.try_take().is_zero());
        }
        assert!(!limiter.try_take().is_zero());
    }
}
