//! Chat-completions gateway and the deterministic mock oracle.
//!
//! [`HttpGateway`] speaks the `POST {base_url}/chat/completions` protocol
//! with bearer auth, retries transient failures (429, 5xx, timeouts,
//! connection errors) with exponential backoff and jitter, and bounds the
//! number of in-flight requests. The wire is behind the [`ChatTransport`]
//! trait so tests replay recorded transcripts or scripted responses instead
//! of touching the network.
//!
//! [`MockOracle`] ranks a window by configured true scores plus seeded
//! Gaussian noise and renders the completion text a well-behaved model
//! would produce, optionally injecting one duplicated index to exercise the
//! repair path. Output is a pure function of (config, prompt, docids,
//! variant), so mock runs are byte-reproducible.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ioutil;
use crate::promptgen::{render_completion, RenderedPrompt};

/// Default environment variable consulted for the API key.
pub const DEFAULT_API_KEY_ENV: &str = "RACT_API_KEY";

/// Connection details and limits for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    /// Retries after the first attempt; 0 disables retrying.
    pub max_retries: u32,
    /// Upper bound on concurrently in-flight requests.
    pub parallelism: usize,
    /// First backoff delay; doubles per retry. Tests shrink this.
    pub retry_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "local-model".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_secs: 60,
            max_retries: 3,
            parallelism: 4,
            retry_base_ms: 1000,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if self.parallelism < 1 {
            return Err(GateError::InvalidRequest(
                "parallelism must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GateError::InvalidRequest(
                "temperature must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Errors surfaced by completion providers.
#[derive(Debug, PartialEq, thiserror::Error)]
pub enum GateError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {status}: {excerpt}")]
    HttpStatus { status: u16, excerpt: String },
    #[error("gave up after {attempts} attempts; last error: {last}")]
    ExhaustedRetries { attempts: u32, last: Box<GateError> },
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    InvalidResponse(String),
    #[error("no true score configured for docid {0}")]
    UnknownDocid(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A provider of ranking completions. `variant` distinguishes repeated
/// samples for the same prompt: endpoints ignore it (temperature does the
/// work), the mock derives a distinct noise stream from it.
pub trait Completer: Send + Sync {
    fn complete_variant(
        &self,
        prompt: &RenderedPrompt,
        window_docids: &[String],
        variant: u64,
    ) -> Result<String, GateError>;

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        window_docids: &[String],
    ) -> Result<String, GateError> {
        self.complete_variant(prompt, window_docids, 0)
    }
}

/// Draws `k` completion candidates for one prompt (variants 0..k).
pub fn sample_candidates(
    completer: &dyn Completer,
    prompt: &RenderedPrompt,
    window_docids: &[String],
    k: usize,
) -> Result<Vec<String>, GateError> {
    if k < 1 {
        return Err(GateError::InvalidRequest(
            "candidate count must be at least 1".into(),
        ));
    }
    (0..k as u64)
        .map(|variant| completer.complete_variant(prompt, window_docids, variant))
        .collect()
}

/// One user-turn chat-completions request body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Raw HTTP outcome of one transport call.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub status: u16,
    pub body: String,
}

/// Transport-level failures, before HTTP status interpretation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("connection failure: {0}")]
    Connect(String),
}

/// The wire under the gateway. Implementations must be safe to call from
/// several threads at once.
pub trait ChatTransport: Send + Sync {
    fn post_chat(&self, request: &ChatRequest) -> Result<ChatReply, TransportError>;
}

/// Real HTTP transport over a chat-completions endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    /// Reads the API key from the configured environment variable and builds
    /// the client. Fails fast with [`GateError::MissingApiKey`].
    pub fn from_config(cfg: &EndpointConfig) -> Result<Self, GateError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| GateError::MissingApiKey(cfg.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| GateError::Transport(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn post_chat(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(ChatReply { status, body })
    }
}

/// One recorded request/response exchange.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TranscriptEntry {
    pub request: Value,
    pub response: TranscriptResponse,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TranscriptResponse {
    pub status: u16,
    pub body: Value,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, ioutil::JsonlError> {
    ioutil::read_jsonl(path)
}

pub fn write_transcript(path: &Path, entries: &[TranscriptEntry]) -> std::io::Result<()> {
    ioutil::write_jsonl(path, entries)
}

/// Wraps a transport and captures all traffic for later replay.
pub struct RecordingTransport<T: ChatTransport> {
    inner: T,
    captured: Mutex<Vec<TranscriptEntry>>,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            captured: Mutex::new(Vec::new()),
        }
    }

    /// Writes the captured transcript (atomic).
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let captured = self.captured.lock().expect("transcript lock");
        ioutil::write_jsonl(path, &captured)
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn post_chat(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let reply = self.inner.post_chat(request)?;
        let body_value = serde_json::from_str::<Value>(&reply.body)
            .unwrap_or_else(|_| Value::String(reply.body.clone()));
        let entry = TranscriptEntry {
            request: serde_json::to_value(request).expect("request serializes"),
            response: TranscriptResponse {
                status: reply.status,
                body: body_value,
            },
        };
        self.captured.lock().expect("transcript lock").push(entry);
        Ok(reply)
    }
}

/// Replays a recorded transcript in order. Each outgoing request must equal
/// the recorded one, which doubles as a check that the gateway never mutates
/// prompt text.
pub struct ReplayTransport {
    entries: Mutex<VecDeque<TranscriptEntry>>,
}

impl ReplayTransport {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        ReplayTransport {
            entries: Mutex::new(entries.into()),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ioutil::JsonlError> {
        Ok(ReplayTransport::new(read_transcript(path)?))
    }
}

impl ChatTransport for ReplayTransport {
    fn post_chat(&self, request: &ChatRequest) -> Result<ChatReply, TransportError> {
        let entry = self
            .entries
            .lock()
            .expect("replay lock")
            .pop_front()
            .ok_or_else(|| TransportError::Connect("transcript exhausted".into()))?;
        let sent = serde_json::to_value(request).expect("request serializes");
        if sent != entry.request {
            return Err(TransportError::Connect(
                "request does not match recorded transcript".into(),
            ));
        }
        let body = match &entry.response.body {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        Ok(ChatReply {
            status: entry.response.status,
            body,
        })
    }
}

/// Scripted transport for tests: serves a fixed reply sequence and tracks
/// call and concurrency counts.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<ChatReply, TransportError>>>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay: Option<Duration>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<ChatReply, TransportError>>) -> Self {
        ScriptedTransport {
            script: Mutex::new(script.into()),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            delay: None,
        }
    }

    /// Adds per-call latency so concurrency windows overlap observably.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneously in-flight calls observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl ChatTransport for ScriptedTransport {
    fn post_chat(&self, _request: &ChatRequest) -> Result<ChatReply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        let reply = self
            .script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Connect("script exhausted".into())));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply
    }
}

/// Builds a minimal chat-completions response body carrying `content`.
/// Convenient for stubs and fixtures.
pub fn completion_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.sem.cv.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// Chat-completions client with retry, backoff, and a concurrency bound.
pub struct HttpGateway {
    cfg: EndpointConfig,
    transport: Box<dyn ChatTransport>,
    limiter: Semaphore,
}

impl HttpGateway {
    /// Builds a gateway over an arbitrary transport (tests inject stubs).
    pub fn new(cfg: EndpointConfig, transport: Box<dyn ChatTransport>) -> Result<Self, GateError> {
        cfg.validate()?;
        let limiter = Semaphore::new(cfg.parallelism);
        Ok(HttpGateway {
            cfg,
            transport,
            limiter,
        })
    }

    /// Builds a gateway over a real HTTP transport, reading the API key from
    /// the configured environment variable.
    pub fn over_http(cfg: EndpointConfig) -> Result<Self, GateError> {
        let transport = HttpTransport::from_config(&cfg)?;
        HttpGateway::new(cfg, Box::new(transport))
    }

    fn parse_content(body: &str) -> Result<String, GateError> {
        let parsed: ChatCompletionResponse =
            serde_json::from_str(body).map_err(|e| GateError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GateError::InvalidResponse("response carries no choices".into()))
    }

    fn backoff_delay(&self, attempt: u32) -> Duration {
        let base = self
            .cfg
            .retry_base_ms
            .saturating_mul(1u64 << attempt.min(15));
        let capped = base.min(30_000);
        let jitter = rand::rng().random_range(0.75..1.25);
        Duration::from_millis((capped as f64 * jitter) as u64)
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || (500..=599).contains(&status)
}

fn excerpt(body: &str) -> String {
    const LIMIT: usize = 200;
    if body.len() <= LIMIT {
        body.to_string()
    } else {
        let mut cut = LIMIT;
        while !body.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}...", &body[..cut])
    }
}

impl Completer for HttpGateway {
    fn complete_variant(
        &self,
        prompt: &RenderedPrompt,
        _window_docids: &[String],
        _variant: u64,
    ) -> Result<String, GateError> {
        let _permit = self.limiter.acquire();
        let request = ChatRequest {
            model: self.cfg.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.text.clone(),
            }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_output_tokens,
        };
        let mut attempt: u32 = 0;
        loop {
            let failure = match self.transport.post_chat(&request) {
                Ok(reply) if reply.status == 200 => {
                    if attempt > 0 {
                        log::info!("chat request succeeded after {attempt} retries");
                    }
                    return Self::parse_content(&reply.body);
                }
                Ok(reply) if retryable_status(reply.status) => GateError::HttpStatus {
                    status: reply.status,
                    excerpt: excerpt(&reply.body),
                },
                Ok(reply) => {
                    return Err(GateError::HttpStatus {
                        status: reply.status,
                        excerpt: excerpt(&reply.body),
                    })
                }
                Err(TransportError::Timeout) => GateError::Timeout,
                Err(TransportError::Connect(msg)) => GateError::Transport(msg),
            };
            if attempt >= self.cfg.max_retries {
                return Err(if self.cfg.max_retries == 0 {
                    failure
                } else {
                    GateError::ExhaustedRetries {
                        attempts: attempt + 1,
                        last: Box::new(failure),
                    }
                });
            }
            let delay = self.backoff_delay(attempt);
            log::warn!(
                "chat request attempt {} failed ({failure}); retrying in {delay:?}",
                attempt + 1
            );
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

/// Configuration of the deterministic mock oracle.
#[derive(Debug, Clone)]
pub struct MockOracleConfig {
    /// Ground-truth relevance per docid. Every docid the oracle is asked to
    /// rank must appear here.
    pub true_scores: HashMap<String, f64>,
    /// Standard deviation of the Gaussian noise added per call.
    pub noise_stddev: f64,
    /// Probability of injecting one duplicated index into the output.
    pub malform_rate: f64,
    pub seed: u64,
}

/// Offline completer: ranks windows by noisy true scores and renders the
/// completion text in the prompt's own format. Ties break by docid,
/// lexicographically.
pub struct MockOracle {
    cfg: MockOracleConfig,
}

impl MockOracle {
    pub fn new(cfg: MockOracleConfig) -> Result<Self, GateError> {
        if !cfg.noise_stddev.is_finite() || cfg.noise_stddev < 0.0 {
            return Err(GateError::InvalidRequest(
                "noise stddev must be finite and non-negative".into(),
            ));
        }
        if !cfg.malform_rate.is_finite() || !(0.0..=1.0).contains(&cfg.malform_rate) {
            return Err(GateError::InvalidRequest(
                "malform rate must lie in [0, 1]".into(),
            ));
        }
        Ok(MockOracle { cfg })
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }

    fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

impl Completer for MockOracle {
    fn complete_variant(
        &self,
        prompt: &RenderedPrompt,
        window_docids: &[String],
        variant: u64,
    ) -> Result<String, GateError> {
        // Per-call stream: the same (seed, prompt, window, variant) always
        // yields the same noise, independent of call order or threading.
        let mut hasher = Fnv1a::new();
        hasher.update(&self.cfg.seed.to_le_bytes());
        hasher.update(prompt.text.as_bytes());
        for docid in window_docids {
            hasher.update(docid.as_bytes());
            hasher.update(&[0xFF]);
        }
        hasher.update(&variant.to_le_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());

        let mut scored: Vec<(f64, &str, usize)> = Vec::with_capacity(window_docids.len());
        for (i, docid) in window_docids.iter().enumerate() {
            let base = *self
                .cfg
                .true_scores
                .get(docid)
                .ok_or_else(|| GateError::UnknownDocid(docid.clone()))?;
            let noise = if self.cfg.noise_stddev > 0.0 {
                let normal = Normal::new(0.0, self.cfg.noise_stddev)
                    .map_err(|e| GateError::InvalidRequest(e.to_string()))?;
                normal.sample(&mut rng)
            } else {
                0.0
            };
            scored.push((base + noise, docid.as_str(), i + 1));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let mut order: Vec<usize> = scored.iter().map(|&(_, _, idx)| idx).collect();

        if self.cfg.malform_rate > 0.0 && rng.random::<f64>() < self.cfg.malform_rate {
            // One duplicated index: enough to break strict parsing while
            // staying trivially repairable.
            if order.len() == 1 {
                order.push(order[0]);
            } else {
                let j = rng.random_range(1..order.len());
                order[j] = order[j - 1];
            }
        }
        Ok(render_completion(&order, prompt.format))
    }
}
