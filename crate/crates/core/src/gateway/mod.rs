//! Chat and embedding access with fingerprinted caching and record/replay.
//!
//! Every request is reduced to a fingerprint (SHA-256 of its canonical JSON).
//! The [`Gateway`] answers from its cassette when it can and only reaches a
//! backend on a miss; in [`CassetteMode::Replay`] a miss is an error.

mod cassette;
mod http;
pub mod scripted;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder};

pub use cassette::{Cassette, CassetteEntry, CassetteMode};
pub use http::{OpenAiCompatible, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no cassette entry for fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("provider error after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("no {0} backend configured")]
    NoBackend(&'static str),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
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
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// Temperature 0, no seed, no token cap.
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: 0.0,
            seed: None,
            max_tokens: None,
        }
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => return Err(GatewayError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(GatewayError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
            _ => {}
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be a finite number >= 0",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint("chat", self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub model_id: String,
    pub texts: Vec<String>,
}

impl EmbeddingRequest {
    pub fn new(model_id: impl Into<String>, texts: Vec<String>) -> Self {
        Self {
            model_id: model_id.into(),
            texts,
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        fingerprint("embed", self)
    }
}

/// Hex SHA-256 of `{"kind": kind, "request": request}` serialized with
/// sorted object keys.
pub fn fingerprint<T: Serialize>(kind: &str, request: &T) -> String {
    let canonical = canonical_json(kind, request);
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn canonical_json<T: Serialize>(kind: &str, request: &T) -> String {
    // serde_json's Value map is ordered by key, which fixes field order.
    let value = serde_json::json!({
        "kind": kind,
        "request": serde_json::to_value(request).expect("request serializes"),
    });
    value.to_string()
}

/// A failure reported by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderError {
    pub transient: bool,
    pub message: String,
}

impl ProviderError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            transient: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            transient: false,
            message: message.into(),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Anything that can answer a chat request; implemented by [`Gateway`].
pub trait ChatModel: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// A chat model bound to a model id and request seed.
#[derive(Clone, Copy)]
pub struct ModelHandle<'a> {
    pub model: &'a dyn ChatModel,
    pub model_id: &'a str,
    pub seed: Option<u64>,
}

impl<'a> ModelHandle<'a> {
    pub fn new(model: &'a dyn ChatModel, model_id: &'a str) -> Self {
        Self {
            model,
            model_id,
            seed: None,
        }
    }

    pub fn with_seed(self, seed: Option<u64>) -> Self {
        Self { seed, ..self }
    }

    pub fn ask(&self, messages: &[Message]) -> Result<String, GatewayError> {
        let request = ChatRequest::new(self.model_id, messages.to_vec()).with_seed(self.seed);
        self.model.chat(&request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from `base_delay`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.saturating_sub(1).min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    fn run<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, GatewayError> {
        let max = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && attempt < max => {
                    let delay = self.delay_after(attempt);
                    log::warn!(
                        "transient provider error (attempt {attempt}/{max}): {}; retrying in {delay:?}",
                        e.message
                    );
                    thread::sleep(delay);
                }
                Err(e) => {
                    return Err(GatewayError::Provider {
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
    }
}

/// Counting semaphore bounding in-flight backend calls.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub cache_hits: u64,
    /// Backend calls, including retried attempts.
    pub backend_calls: u64,
}

pub struct GatewayBuilder {
    mode: CassetteMode,
    cassette_path: Option<std::path::PathBuf>,
    chat: Option<Arc<dyn ChatBackend>>,
    embed: Option<Arc<dyn EmbedBackend>>,
    retry: RetryPolicy,
    max_in_flight: usize,
}

impl GatewayBuilder {
    pub fn cassette(mut self, path: impl AsRef<Path>) -> Self {
        self.cassette_path = Some(path.as_ref().to_path_buf());
        self
    }

    pub fn chat_backend(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.chat = Some(backend);
        self
    }

    pub fn embed_backend(mut self, backend: Arc<dyn EmbedBackend>) -> Self {
        self.embed = Some(backend);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n;
        self
    }

    /// Opens the cassette. Replay requires an existing file; Record creates
    /// one on first write; Passthrough never writes.
    pub fn build(self) -> Result<Gateway, GatewayError> {
        let cassette = match (&self.cassette_path, self.mode) {
            (Some(p), CassetteMode::Replay) => Cassette::open(p, false)?,
            (Some(p), CassetteMode::Record) => Cassette::open(p, true)?,
            (None, CassetteMode::Replay) => {
                return Err(GatewayError::Cassette("replay mode needs a cassette file".into()))
            }
            (None, CassetteMode::Record) => {
                return Err(GatewayError::Cassette("record mode needs a cassette file".into()))
            }
            (_, CassetteMode::Passthrough) => Cassette::in_memory(),
        };
        Ok(Gateway {
            mode: self.mode,
            chat: self.chat,
            embed: self.embed,
            retry: self.retry,
            slots: Slots::new(self.max_in_flight),
            store: Mutex::new(Store {
                cassette,
                dims: HashMap::new(),
            }),
            hits: AtomicU64::new(0),
            calls: AtomicU64::new(0),
        })
    }
}

struct Store {
    cassette: Cassette,
    dims: HashMap<String, usize>,
}

/// Cached, replayable front for chat and embedding backends.
///
/// Safe to share across threads: cassette access is serialized and at most
/// `max_in_flight` backend calls run at once.
pub struct Gateway {
    mode: CassetteMode,
    chat: Option<Arc<dyn ChatBackend>>,
    embed: Option<Arc<dyn EmbedBackend>>,
    retry: RetryPolicy,
    slots: Slots,
    store: Mutex<Store>,
    hits: AtomicU64,
    calls: AtomicU64,
}

impl Gateway {
    pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

    pub fn builder(mode: CassetteMode) -> GatewayBuilder {
        GatewayBuilder {
            mode,
            cassette_path: None,
            chat: None,
            embed: None,
            retry: RetryPolicy::default(),
            max_in_flight: Self::DEFAULT_MAX_IN_FLIGHT,
        }
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            cache_hits: self.hits.load(Ordering::Relaxed),
            backend_calls: self.calls.load(Ordering::Relaxed),
        }
    }

    pub fn cassette_len(&self) -> usize {
        self.lock().cassette.len()
    }

    pub fn cassette_path(&self) -> Option<std::path::PathBuf> {
        self.lock().cassette.path().map(Path::to_path_buf)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn lookup(&self, fingerprint: &str) -> Result<Option<Value>, GatewayError> {
        let store = self.lock();
        if let Some(entry) = store.cassette.get(fingerprint) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Some(entry.response.clone()));
        }
        if self.mode == CassetteMode::Replay {
            return Err(GatewayError::CassetteMiss {
                fingerprint: fingerprint.to_string(),
            });
        }
        Ok(None)
    }

    /// Stores a fresh response; if another thread got there first, its
    /// response wins so every caller sees one answer per fingerprint.
    fn store(&self, fingerprint: String, kind: &str, request: Value, response: Value) -> Result<Value, GatewayError> {
        let mut store = self.lock();
        if let Some(existing) = store.cassette.get(&fingerprint) {
            return Ok(existing.response.clone());
        }
        let entry = CassetteEntry {
            fingerprint,
            kind: kind.to_string(),
            request,
            response: response.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let persist = self.mode == CassetteMode::Record;
        store.cassette.insert(entry, persist)?;
        Ok(response)
    }

    fn call_backend<T>(&self, mut call: impl FnMut() -> Result<T, ProviderError>) -> Result<T, GatewayError> {
        let _slot = self.slots.acquire();
        self.retry.run(|| {
            self.calls.fetch_add(1, Ordering::Relaxed);
            call()
        })
    }

    pub fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        request.check()?;
        let fp = request.fingerprint();
        let response = match self.lookup(&fp)? {
            Some(v) => v,
            None => {
                let backend = self.embed.as_ref().ok_or(GatewayError::NoBackend("embedding"))?;
                let vectors = self.call_backend(|| backend.embed(request))?;
                let value = serde_json::to_value(&vectors).map_err(|e| GatewayError::Internal(e.to_string()))?;
                let req = serde_json::to_value(request).map_err(|e| GatewayError::Internal(e.to_string()))?;
                self.store(fp, "embed", req, value)?
            }
        };
        let vectors: Vec<Vec<f64>> = serde_json::from_value(response)
            .map_err(|e| GatewayError::Cassette(format!("malformed embedding response: {e}")))?;
        self.check_dims(&request.model_id, request.texts.len(), &vectors)?;
        Ok(vectors)
    }

    fn check_dims(&self, model_id: &str, expected: usize, vectors: &[Vec<f64>]) -> Result<(), GatewayError> {
        if vectors.len() != expected {
            return Err(GatewayError::Internal(format!(
                "expected {expected} vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(GatewayError::Internal(
                "embedding dimension mismatch within batch".into(),
            ));
        }
        let mut store = self.lock();
        let known = *store.dims.entry(model_id.to_string()).or_insert(dim);
        if known != dim {
            return Err(GatewayError::Internal(format!(
                "model {model_id} returned dimension {dim}, earlier {known}"
            )));
        }
        Ok(())
    }
}

impl ChatModel for Gateway {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.check()?;
        let fp = request.fingerprint();
        let response = match self.lookup(&fp)? {
            Some(v) => v,
            None => {
                let backend = self.chat.as_ref().ok_or(GatewayError::NoBackend("chat"))?;
                let text = self.call_backend(|| backend.complete(request))?;
                let req = serde_json::to_value(request).map_err(|e| GatewayError::Internal(e.to_string()))?;
                self.store(fp, "chat", req, Value::String(text))?
            }
        };
        match response {
            Value::String(s) => Ok(s),
            other => Err(GatewayError::Cassette(format!("malformed chat response: {other}"))),
        }
    }
}

/// [`Embedder`] backed by a gateway and a fixed model id.
pub struct GatewayEmbedder<'a> {
    gateway: &'a Gateway,
    model_id: String,
}

impl<'a> GatewayEmbedder<'a> {
    pub fn new(gateway: &'a Gateway, model_id: impl Into<String>) -> Self {
        Self {
            gateway,
            model_id: model_id.into(),
        }
    }
}

impl Embedder for GatewayEmbedder<'_> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.gateway
            .embed(&EmbeddingRequest::new(self.model_id.clone(), texts.to_vec()))
            .map_err(|e| EmbedError(e.to_string()))
    }
}
