//! Uniform access to generation and embedding backends.
//!
//! Every backend implements [`Backend`]. Production backends talk HTTP
//! ([`remote::RemoteBackend`]); offline runs use [`mock::ScriptedMock`], which
//! answers by request fingerprint.

pub mod batch;
pub mod mock;
pub mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::case::{DrawingArtifact, InterpretationText};

pub use batch::{for_each_ordered, run_batch};
pub use mock::{ClosureBackend, Fallback, RecordingBackend, ScriptEntry, ScriptError, ScriptedMock};
pub use remote::{BackendKind, BackendSpec, HttpTransport, RemoteBackend, RetryPolicy, Transport};

/// Profile dimension of the default remote embedding model.
pub const DEFAULT_EMBEDDING_DIM: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("backend {backend} cannot serve {requested} requests")]
    WrongKind { backend: String, requested: BackendKind },
    #[error("request prompt is empty")]
    EmptyPrompt,
    #[error("text to embed is empty")]
    EmptyInput,
    #[error("backend {backend}: transport failure after {retries} retries: {message}")]
    Transport {
        backend: String,
        retries: u32,
        message: String,
    },
    #[error("backend {backend}: timed out after {retries} retries")]
    Timeout { backend: String, retries: u32 },
    #[error("backend {backend}: HTTP status {status} after {retries} retries")]
    Status {
        backend: String,
        status: u16,
        retries: u32,
    },
    #[error("backend {backend}: empty model response after {retries} retries")]
    EmptyResponse { backend: String, retries: u32 },
    #[error("backend {backend}: malformed response: {message}")]
    MalformedResponse { backend: String, message: String },
    #[error("backend {backend}: embedding has {actual} values, profile declares {expected}")]
    DimensionMismatch {
        backend: String,
        expected: usize,
        actual: usize,
    },
    #[error("backend {backend}: embedding entry {index} is not finite")]
    NonFinite { backend: String, index: usize },
    #[error("backend {backend}: unscripted request {fingerprint}")]
    Unscripted { backend: String, fingerprint: String },
    #[error("backend {backend}: scripted failure: {message}")]
    Scripted { backend: String, message: String },
    #[error("backend {backend}: environment variable {var} is not set")]
    MissingApiKey { backend: String, var: String },
}

impl GatewayError {
    /// Retries spent before the error surfaced, when the backend retried.
    pub fn retries(&self) -> u32 {
        match self {
            GatewayError::Transport { retries, .. }
            | GatewayError::Timeout { retries, .. }
            | GatewayError::Status { retries, .. }
            | GatewayError::EmptyResponse { retries, .. } => *retries,
            _ => 0,
        }
    }
}

/// One generation call. `image` is absent for text-only stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image: Option<DrawingArtifact>,
    pub prompt: String,
    pub prompt_id: String,
}

impl GenerateRequest {
    pub fn new(
        image: Option<DrawingArtifact>,
        prompt: impl Into<String>,
        prompt_id: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        Ok(Self {
            image,
            prompt,
            prompt_id: prompt_id.into(),
        })
    }

    /// SHA-256 over the sorted-key serialization of the request. The image
    /// enters through its digest.
    pub fn fingerprint(&self) -> String {
        let envelope = serde_json::json!({
            "kind": "generate",
            "image_sha256": self.image.as_ref().map(|i| i.sha256()),
            "prompt": self.prompt,
            "prompt_id": self.prompt_id,
        });
        canonical::fingerprint(&envelope).expect("json values always serialize")
    }
}

/// Fingerprint of an embedding request for `text`.
pub fn embed_fingerprint(text: &str) -> String {
    let envelope = serde_json::json!({ "kind": "embed", "text": text });
    canonical::fingerprint(&envelope).expect("json values always serialize")
}

/// A backend answer together with the retries it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply<T> {
    pub value: T,
    pub retries: u32,
}

impl<T> Reply<T> {
    pub fn first_try(value: T) -> Self {
        Self { value, retries: 0 }
    }
}

/// A model backend. Implementations must be shareable across threads.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError>;

    fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError>;

    /// Dimension the embedding profile declares, if any.
    fn embedding_dim(&self) -> Option<usize> {
        None
    }
}

/// A fixed-dimension, finite embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmbeddingRepr")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    dim: usize,
    source: String,
}

#[derive(Deserialize)]
struct EmbeddingRepr {
    values: Vec<f64>,
    dim: usize,
    source: String,
}

impl TryFrom<EmbeddingRepr> for EmbeddingVector {
    type Error = GatewayError;

    fn try_from(repr: EmbeddingRepr) -> Result<Self, Self::Error> {
        let v = EmbeddingVector::new(repr.values, repr.source)?;
        if v.dim != repr.dim {
            return Err(GatewayError::DimensionMismatch {
                backend: v.source,
                expected: repr.dim,
                actual: v.dim,
            });
        }
        Ok(v)
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Result<Self, GatewayError> {
        let source = source.into();
        if values.is_empty() {
            return Err(GatewayError::MalformedResponse {
                backend: source,
                message: "embedding is empty".into(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GatewayError::NonFinite {
                backend: source,
                index,
            });
        }
        Ok(Self {
            dim: values.len(),
            values,
            source,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Successful generation with its retry count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub text: InterpretationText,
    pub retries: u32,
}

pub fn generate_interpretation(
    backend: &dyn Backend,
    req: &GenerateRequest,
) -> Result<Generated, GatewayError> {
    if req.prompt.trim().is_empty() {
        return Err(GatewayError::EmptyPrompt);
    }
    let reply = backend.generate(req)?;
    let text = InterpretationText::new(reply.value, backend.name(), req.prompt_id.clone())
        .map_err(|_| GatewayError::EmptyResponse {
            backend: backend.name().to_string(),
            retries: reply.retries,
        })?;
    Ok(Generated {
        text,
        retries: reply.retries,
    })
}

pub fn embed_text(backend: &dyn Backend, text: &str) -> Result<EmbeddingVector, GatewayError> {
    if text.trim().is_empty() {
        return Err(GatewayError::EmptyInput);
    }
    let reply = backend.embed(text)?;
    if let Some(expected) = backend.embedding_dim() {
        if reply.value.len() != expected {
            return Err(GatewayError::DimensionMismatch {
                backend: backend.name().to_string(),
                expected,
                actual: reply.value.len(),
            });
        }
    }
    EmbeddingVector::new(reply.value, backend.name())
}
