//! Uniform gateway for all LLM calls.
//!
//! Every other module funnels chat-completions requests through [`Backend`],
//! which provides a real HTTP transport, a deterministic mock, a file-based
//! response cache, and a retry/rate-limit policy. Mock and cache-only modes
//! make the whole pipeline testable offline: a live run records every
//! response under a content hash of the request, and a cache-only replay
//! returns byte-identical content without touching the network.

mod transport;

use std::collections::HashMap;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use transport::{HttpTransport, Transport, TransportError, TransportReply};

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
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
}

/// One chat-completions request. `sample_index` distinguishes the k sampled
/// draws for a single prompt; it is part of the cache key but not of the
/// wire payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("messages must be nonempty".into()));
        }
        if self.messages[0].role == Role::Assistant {
            return Err(BackendError::InvalidRequest(
                "first message role must be system or user".into(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest("top_p must be in (0, 1]".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Canonical JSON used for cache keys: struct fields in declaration
    /// order, compact encoding.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    /// Cache key: SHA-256 of the canonical request JSON (includes
    /// sample_index, so repeated draws are stored independently).
    pub fn cache_key(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }

    /// Wire payload for the chat-completions endpoint. Excludes
    /// sample_index, which is an artifact-side bookkeeping field.
    pub fn wire_body(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model_name,
            "messages": self.messages,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        })
    }

    fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Mock,
    CacheOnly,
}

/// Retry schedule for live calls: `attempts` tries total, exponential
/// backoff doubling from `initial_backoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    #[serde(with = "duration_millis")]
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 5, initial_backoff: Duration::from_secs(1) }
    }
}

mod duration_millis {
    use super::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub max_parallel: usize,
    pub retry: RetryPolicy,
    pub cache_dir: Option<PathBuf>,
    pub mode: BackendMode,
}

impl BackendConfig {
    pub fn mock() -> Self {
        BackendConfig {
            endpoint: String::new(),
            api_key_env: String::new(),
            max_parallel: 4,
            retry: RetryPolicy::default(),
            cache_dir: None,
            mode: BackendMode::Mock,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("transport failed after {attempts} attempts: {last_error}")]
    Transport { attempts: u32, last_error: String },
    #[error("cache miss for request {key} in cache_only mode")]
    CacheMiss { key: String },
    #[error("cache io error at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cache entry at {path}: {source}")]
    CacheFormat {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unusable response: {0}")]
    BadResponse(String),
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(digest.len() * 2);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// SHA-256 hex digest of arbitrary text. Shared by cache keys, config
/// digests, and verdict-output digests.
pub fn sha256_hex(text: &str) -> String {
    hex_digest(text.as_bytes())
}

/// Counting semaphore bounding in-flight live calls.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// On-disk cache record: the full request plus the response it produced.
#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: ChatRequest,
    response: ChatResponse,
}

/// The LLM gateway. Safe for concurrent use; cache writes are serialized,
/// live calls are bounded by `max_parallel`.
pub struct Backend {
    config: BackendConfig,
    transport: Box<dyn Transport>,
    fixtures: Mutex<HashMap<String, String>>,
    memory_cache: Mutex<HashMap<String, ChatResponse>>,
    cache_write_lock: Mutex<()>,
    semaphore: Semaphore,
}

impl Backend {
    pub fn new(config: BackendConfig) -> Self {
        Backend::with_transport(config, Box::new(HttpTransport::new()))
    }

    /// Injects a custom transport. Tests use this to assert that mock mode
    /// never touches the network.
    pub fn with_transport(config: BackendConfig, transport: Box<dyn Transport>) -> Self {
        let max_parallel = config.max_parallel.max(1);
        Backend {
            config,
            transport,
            fixtures: Mutex::new(HashMap::new()),
            memory_cache: Mutex::new(HashMap::new()),
            cache_write_lock: Mutex::new(()),
            semaphore: Semaphore::new(max_parallel),
        }
    }

    pub fn mode(&self) -> BackendMode {
        self.config.mode
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Registers a scripted mock fixture: an exact last-user-message text
    /// mapped to a canned reply. Fixtures take precedence over hash-derived
    /// filler.
    pub fn register_fixture(&self, prompt: impl Into<String>, reply: impl Into<String>) {
        self.fixtures.lock().expect("fixtures lock").insert(prompt.into(), reply.into());
    }

    /// Loads fixtures from a JSONL file of {"prompt": ..., "reply": ...}
    /// records.
    pub fn load_fixtures(&self, path: impl AsRef<Path>) -> Result<usize, BackendError> {
        #[derive(Deserialize)]
        struct FixtureRecord {
            prompt: String,
            reply: String,
        }
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|source| BackendError::CacheIo {
            path: path.display().to_string(),
            source,
        })?;
        let mut count = 0;
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|source| BackendError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let record: FixtureRecord =
                serde_json::from_str(&line).map_err(|source| BackendError::CacheFormat {
                    path: path.display().to_string(),
                    source,
                })?;
            self.register_fixture(record.prompt, record.reply);
            count += 1;
        }
        Ok(count)
    }

    /// Deterministic mock reply for a request: a registered fixture when the
    /// last user message matches one exactly, else stable hash-derived
    /// filler. The filler is alphabetic so it never carries an extractable
    /// numeric answer by accident.
    pub fn mock_responder(&self, request: &ChatRequest) -> String {
        if let Some(user_content) = request.last_user_content() {
            if let Some(reply) = self.fixtures.lock().expect("fixtures lock").get(user_content) {
                return reply.clone();
            }
        }
        let digest = Sha256::digest(request.canonical_json().as_bytes());
        let mut filler = String::with_capacity(24);
        for b in digest.iter().take(24) {
            filler.push((b'a' + (b % 26)) as char);
        }
        format!("mock response {filler}")
    }

    fn mock_response(&self, request: &ChatRequest) -> ChatResponse {
        let content = self.mock_responder(request);
        let prompt_chars: usize = request.messages.iter().map(|m| m.content.chars().count()).sum();
        ChatResponse {
            usage: TokenUsage {
                prompt_tokens: (prompt_chars / 4) as u64,
                completion_tokens: (content.chars().count() / 4) as u64,
                total_tokens: ((prompt_chars + content.chars().count()) / 4) as u64,
            },
            content,
            finish_reason: FinishReason::Stop,
            cached: false,
        }
    }

    fn cache_path(&self, key: &str) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|dir| dir.join(format!("{key}.json")))
    }

    fn cache_lookup(&self, key: &str) -> Result<Option<ChatResponse>, BackendError> {
        if let Some(path) = self.cache_path(key) {
            if !path.exists() {
                return Ok(None);
            }
            let raw = fs::read_to_string(&path).map_err(|source| BackendError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
            let entry: CacheEntry =
                serde_json::from_str(&raw).map_err(|source| BackendError::CacheFormat {
                    path: path.display().to_string(),
                    source,
                })?;
            return Ok(Some(entry.response));
        }
        Ok(self.memory_cache.lock().expect("memory cache lock").get(key).cloned())
    }

    fn cache_store(&self, request: &ChatRequest, response: &ChatResponse) -> Result<(), BackendError> {
        let key = request.cache_key();
        if let Some(path) = self.cache_path(&key) {
            let _guard = self.cache_write_lock.lock().expect("cache write lock");
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| BackendError::CacheIo {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
            let entry = CacheEntry { request: request.clone(), response: response.clone() };
            let body = serde_json::to_string_pretty(&entry).expect("entry serializes");
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, body).map_err(|source| BackendError::CacheIo {
                path: tmp.display().to_string(),
                source,
            })?;
            fs::rename(&tmp, &path).map_err(|source| BackendError::CacheIo {
                path: path.display().to_string(),
                source,
            })?;
        } else {
            self.memory_cache
                .lock()
                .expect("memory cache lock")
                .insert(key, response.clone());
        }
        Ok(())
    }

    fn api_key(&self) -> Result<String, BackendError> {
        if self.config.api_key_env.is_empty() {
            return Err(BackendError::Configuration(
                "api_key_env is not set for live mode".into(),
            ));
        }
        std::env::var(&self.config.api_key_env).map_err(|_| {
            BackendError::Configuration(format!(
                "environment variable {} is not set",
                self.config.api_key_env
            ))
        })
    }

    fn live_call(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let api_key = self.api_key()?;
        let body = request.wire_body();
        let mut backoff = self.config.retry.initial_backoff;
        let attempts = self.config.retry.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            let _permit = self.semaphore.acquire();
            match self.transport.post_chat(&self.config.endpoint, &api_key, &body) {
                Ok(reply) if reply.status == 200 => {
                    return parse_chat_completion(&reply.body);
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last_error = format!("http status {}", reply.status);
                }
                Ok(reply) => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        last_error: format!("http status {}: {}", reply.status, truncate(&reply.body, 200)),
                    });
                }
                Err(err) => {
                    last_error = err.to_string();
                }
            }
        }
        Err(BackendError::Transport { attempts, last_error })
    }

    /// Runs one request through the gateway.
    ///
    /// All modes consult the cache first, so an identical request issued
    /// twice returns the stored content with `cached = true`, and a live run
    /// followed by a cache-only replay returns byte-identical content.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(mut hit) = self.cache_lookup(&key)? {
            hit.cached = true;
            return Ok(hit);
        }
        let response = match self.config.mode {
            BackendMode::Mock => self.mock_response(request),
            BackendMode::CacheOnly => return Err(BackendError::CacheMiss { key }),
            BackendMode::Live => self.live_call(request)?,
        };
        self.cache_store(request, &response)?;
        Ok(response)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

fn parse_chat_completion(body: &str) -> Result<ChatResponse, BackendError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| BackendError::BadResponse(format!("response is not JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::BadResponse("response has no choices".into()))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| BackendError::BadResponse("choice has no message content".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(|f| f.as_str()) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Error,
    };
    if finish_reason == FinishReason::Stop && content.is_empty() {
        return Err(BackendError::BadResponse("empty content with finish_reason=stop".into()));
    }
    let usage = value.get("usage").cloned().unwrap_or_default();
    let read = |field: &str| usage.get(field).and_then(|v| v.as_u64()).unwrap_or(0);
    Ok(ChatResponse {
        content,
        finish_reason,
        usage: TokenUsage {
            prompt_tokens: read("prompt_tokens"),
            completion_tokens: read("completion_tokens"),
            total_tokens: read("total_tokens"),
        },
        cached: false,
    })
}

/// Applies `f` to every item on a pool of `workers` threads, preserving
/// input order in the results. Used by the parallel-per-item pipeline
/// stages.
pub fn parallel_map<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<R>> = Vec::new();
    results.resize_with(items.len(), || None);
    let results = Mutex::new(results);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= items.len() {
                    break;
                }
                let out = f(&items[idx]);
                results.lock().expect("results lock")[idx] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("worker filled slot"))
        .collect()
}
