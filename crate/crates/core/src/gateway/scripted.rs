//! Offline backends with fixed behaviour, for tests and demos.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, EmbedBackend, EmbeddingRequest, ProviderError};

type Responder = dyn Fn(&ChatRequest, usize) -> Result<String, ProviderError> + Send + Sync;

/// Chat backend answering from a queue, a constant, or a closure.
pub struct ScriptedChat {
    queue: Mutex<VecDeque<String>>,
    responder: Option<Box<Responder>>,
    calls: AtomicUsize,
}

impl ScriptedChat {
    /// Answers each call with the next reply; fails once the queue is empty.
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            queue: Mutex::new(replies.into_iter().map(Into::into).collect()),
            responder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn constant(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::from_fn(move |_, _| Ok(reply.clone()))
    }

    /// The closure receives the request and the zero-based call number.
    pub fn from_fn(f: impl Fn(&ChatRequest, usize) -> Result<String, ProviderError> + Send + Sync + 'static) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(f) = &self.responder {
            return f(request, n);
        }
        self.queue
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front()
            .ok_or_else(|| ProviderError::fatal("scripted replies exhausted"))
    }
}

/// Maps a text of `n` characters to the unit vector `e_(n mod dim)`.
#[derive(Debug, Clone)]
pub struct LengthBasisEmbed {
    dim: usize,
}

impl LengthBasisEmbed {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl EmbedBackend for LengthBasisEmbed {
    fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(request
            .texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; self.dim];
                v[t.chars().count() % self.dim] = 1.0;
                v
            })
            .collect())
    }
}
