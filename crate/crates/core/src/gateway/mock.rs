//! Deterministic offline backends: fingerprint-scripted mocks, a recorder
//! that captures live answers into scripts, and closure-driven backends for
//! building fixtures.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use super::{embed_fingerprint, Backend, GatewayError, GenerateRequest, Reply};
use crate::canonical::{self, sha256_hex};

/// What a mock does with a request it has no script entry for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    #[default]
    Error,
    /// Answer with text or a vector derived from the fingerprint.
    EchoHash,
}

/// One line of a mock script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_vector: Option<Vec<f64>>,
    /// Simulated backend failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Canned {
    Text(String),
    Vector(Vec<f64>),
    Failure(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading mock script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing mock script {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("script entry {0} must carry exactly one of response_text, response_vector, response_error")]
    Ambiguous(String),
    #[error("script has two entries for fingerprint {0}")]
    Duplicate(String),
}

/// Deterministic backend answering from a fingerprint-keyed script.
#[derive(Debug, Clone)]
pub struct ScriptedMock {
    name: String,
    script: BTreeMap<String, Canned>,
    fallback: Fallback,
    echo_dim: usize,
}

impl ScriptedMock {
    pub fn new(name: impl Into<String>, fallback: Fallback) -> Self {
        Self {
            name: name.into(),
            script: BTreeMap::new(),
            fallback,
            echo_dim: 16,
        }
    }

    /// Dimension of vectors produced by the echo-hash fallback.
    pub fn with_echo_dim(mut self, dim: usize) -> Self {
        self.echo_dim = dim.max(1);
        self
    }

    pub fn script_text(&mut self, req: &GenerateRequest, text: impl Into<String>) {
        self.script.insert(req.fingerprint(), Canned::Text(text.into()));
    }

    pub fn script_failure(&mut self, req: &GenerateRequest, message: impl Into<String>) {
        self.script
            .insert(req.fingerprint(), Canned::Failure(message.into()));
    }

    pub fn script_vector(&mut self, text: &str, vector: Vec<f64>) {
        self.script
            .insert(embed_fingerprint(text), Canned::Vector(vector));
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }

    pub fn from_entries(
        name: impl Into<String>,
        entries: Vec<ScriptEntry>,
        fallback: Fallback,
    ) -> Result<Self, ScriptError> {
        let mut mock = Self::new(name, fallback);
        for entry in entries {
            let canned = match (entry.response_text, entry.response_vector, entry.response_error) {
                (Some(t), None, None) => Canned::Text(t),
                (None, Some(v), None) => Canned::Vector(v),
                (None, None, Some(e)) => Canned::Failure(e),
                _ => return Err(ScriptError::Ambiguous(entry.fingerprint)),
            };
            if mock.script.insert(entry.fingerprint.clone(), canned).is_some() {
                return Err(ScriptError::Duplicate(entry.fingerprint));
            }
        }
        Ok(mock)
    }

    /// Entries ordered by fingerprint.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.script
            .iter()
            .map(|(fp, canned)| {
                let mut entry = ScriptEntry {
                    fingerprint: fp.clone(),
                    response_text: None,
                    response_vector: None,
                    response_error: None,
                };
                match canned {
                    Canned::Text(t) => entry.response_text = Some(t.clone()),
                    Canned::Vector(v) => entry.response_vector = Some(v.clone()),
                    Canned::Failure(e) => entry.response_error = Some(e.clone()),
                }
                entry
            })
            .collect()
    }

    pub fn load(
        name: impl Into<String>,
        path: &Path,
        fallback: Fallback,
    ) -> Result<Self, ScriptError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(&raw).map_err(|source| ScriptError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_entries(name, entries, fallback)
    }

    /// Canonical JSON for the script file.
    pub fn to_script_json(&self) -> String {
        canonical::to_canonical_json(&self.entries()).expect("script entries serialize")
    }

    fn lookup(&self, fingerprint: &str) -> Option<&Canned> {
        self.script.get(fingerprint)
    }

    fn unscripted(&self, fingerprint: String) -> GatewayError {
        GatewayError::Unscripted {
            backend: self.name.clone(),
            fingerprint,
        }
    }

    fn echo_vector(&self, fingerprint: &str) -> Vec<f64> {
        (0..self.echo_dim)
            .map(|i| {
                let digest = sha256_hex(format!("{fingerprint}:{i}").as_bytes());
                let word = u32::from_str_radix(&digest[..8], 16).unwrap_or(0);
                f64::from(word) / f64::from(u32::MAX) * 2.0 - 1.0
            })
            .collect()
    }
}

impl Backend for ScriptedMock {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError> {
        let fp = req.fingerprint();
        match self.lookup(&fp) {
            Some(Canned::Text(t)) => Ok(Reply::first_try(t.clone())),
            Some(Canned::Failure(message)) => Err(GatewayError::Scripted {
                backend: self.name.clone(),
                message: message.clone(),
            }),
            Some(Canned::Vector(_)) => Err(GatewayError::MalformedResponse {
                backend: self.name.clone(),
                message: format!("script entry {fp} holds a vector, not text"),
            }),
            None => match self.fallback {
                Fallback::Error => Err(self.unscripted(fp)),
                Fallback::EchoHash => Ok(Reply::first_try(format!("echo-hash {fp}"))),
            },
        }
    }

    fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError> {
        let fp = embed_fingerprint(text);
        match self.lookup(&fp) {
            Some(Canned::Vector(v)) => Ok(Reply::first_try(v.clone())),
            Some(Canned::Failure(message)) => Err(GatewayError::Scripted {
                backend: self.name.clone(),
                message: message.clone(),
            }),
            Some(Canned::Text(_)) => Err(GatewayError::MalformedResponse {
                backend: self.name.clone(),
                message: format!("script entry {fp} holds text, not a vector"),
            }),
            None => match self.fallback {
                Fallback::Error => Err(self.unscripted(fp)),
                Fallback::EchoHash => Ok(Reply::first_try(self.echo_vector(&fp))),
            },
        }
    }
}

/// Wraps a backend and captures every successful answer under its
/// fingerprint, producing a replayable [`ScriptedMock`].
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    captured: Mutex<BTreeMap<String, Canned>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        Self {
            inner,
            captured: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn to_mock(&self) -> ScriptedMock {
        let captured = self.captured.lock().expect("recorder lock poisoned");
        ScriptedMock {
            name: self.inner.name().to_string(),
            script: captured.clone(),
            fallback: Fallback::Error,
            echo_dim: 16,
        }
    }

    fn capture(&self, fingerprint: String, canned: Canned) {
        self.captured
            .lock()
            .expect("recorder lock poisoned")
            .insert(fingerprint, canned);
    }
}

impl Backend for RecordingBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError> {
        let reply = self.inner.generate(req)?;
        self.capture(req.fingerprint(), Canned::Text(reply.value.clone()));
        Ok(reply)
    }

    fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError> {
        let reply = self.inner.embed(text)?;
        self.capture(embed_fingerprint(text), Canned::Vector(reply.value.clone()));
        Ok(reply)
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.inner.embedding_dim()
    }
}

type GenerateFn = dyn Fn(&GenerateRequest) -> Result<String, String> + Send + Sync;
type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>, String> + Send + Sync;

/// Backend whose answers come from closures. Used to author fixtures that
/// are then recorded into scripts.
pub struct ClosureBackend {
    name: String,
    generate: Option<Box<GenerateFn>>,
    embed: Option<Box<EmbedFn>>,
}

impl ClosureBackend {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            generate: None,
            embed: None,
        }
    }

    pub fn on_generate(
        mut self,
        f: impl Fn(&GenerateRequest) -> Result<String, String> + Send + Sync + 'static,
    ) -> Self {
        self.generate = Some(Box::new(f));
        self
    }

    pub fn on_embed(
        mut self,
        f: impl Fn(&str) -> Result<Vec<f64>, String> + Send + Sync + 'static,
    ) -> Self {
        self.embed = Some(Box::new(f));
        self
    }
}

impl Backend for ClosureBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError> {
        let f = self.generate.as_ref().ok_or_else(|| GatewayError::WrongKind {
            backend: self.name.clone(),
            requested: super::BackendKind::Generate,
        })?;
        f(req).map(Reply::first_try).map_err(|message| GatewayError::Scripted {
            backend: self.name.clone(),
            message,
        })
    }

    fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError> {
        let f = self.embed.as_ref().ok_or_else(|| GatewayError::WrongKind {
            backend: self.name.clone(),
            requested: super::BackendKind::Embed,
        })?;
        f(text).map(Reply::first_try).map_err(|message| GatewayError::Scripted {
            backend: self.name.clone(),
            message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{embed_text, generate_interpretation};

    fn req(prompt: &str) -> GenerateRequest {
        GenerateRequest::new(None, prompt, "test.v1").unwrap()
    }

    #[test]
    fn scripted_text_is_echoed() {
        let mut mock = ScriptedMock::new("gen", Fallback::Error);
        mock.script_text(&req("X"), "a complete house");
        let out = generate_interpretation(&mock, &req("X")).unwrap();
        assert_eq!(out.text.text, "a complete house");
        assert_eq!(out.text.source, "gen");
        assert_eq!(out.text.prompt_id, "test.v1");
    }

    #[test]
    fn unscripted_request_errors_under_error_fallback() {
        let mock = ScriptedMock::new("gen", Fallback::Error);
        assert!(matches!(
            generate_interpretation(&mock, &req("Y")),
            Err(GatewayError::Unscripted { .. })
        ));
    }

    #[test]
    fn echo_hash_fallback_is_deterministic() {
        let mock = ScriptedMock::new("emb", Fallback::EchoHash).with_echo_dim(8);
        let a = embed_text(&mock, "hello").unwrap();
        let b = embed_text(&mock, "hello").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 8);
        assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(a, embed_text(&mock, "other").unwrap());
    }

    #[test]
    fn scripted_vector() {
        let mut mock = ScriptedMock::new("emb", Fallback::Error);
        mock.script_vector("a", vec![1.0, 0.0, 0.0]);
        let v = embed_text(&mock, "a").unwrap();
        assert_eq!(v.dim(), 3);
        assert_eq!(v.values(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn script_with_non_finite_is_rejected_by_embed_text() {
        let mut mock = ScriptedMock::new("emb", Fallback::Error);
        mock.script_vector("a", vec![1.0, f64::INFINITY]);
        assert!(matches!(
            embed_text(&mock, "a"),
            Err(GatewayError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn script_file_round_trip() {
        let mut mock = ScriptedMock::new("m", Fallback::Error);
        mock.script_text(&req("X"), "text");
        mock.script_vector("a", vec![0.5, -0.25]);
        mock.script_failure(&req("boom"), "down");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, mock.to_script_json()).unwrap();
        let back = ScriptedMock::load("m", &path, Fallback::Error).unwrap();
        assert_eq!(back.entries(), mock.entries());
        assert!(matches!(
            back.generate(&req("boom")),
            Err(GatewayError::Scripted { .. })
        ));
    }

    #[test]
    fn ambiguous_and_duplicate_entries_rejected() {
        let both = ScriptEntry {
            fingerprint: "f".into(),
            response_text: Some("t".into()),
            response_vector: Some(vec![1.0]),
            response_error: None,
        };
        assert!(matches!(
            ScriptedMock::from_entries("m", vec![both], Fallback::Error),
            Err(ScriptError::Ambiguous(_))
        ));
        let one = ScriptEntry {
            fingerprint: "f".into(),
            response_text: Some("t".into()),
            response_vector: None,
            response_error: None,
        };
        assert!(matches!(
            ScriptedMock::from_entries("m", vec![one.clone(), one], Fallback::Error),
            Err(ScriptError::Duplicate(_))
        ));
    }

    #[test]
    fn recorder_replays_identically() {
        let live: Arc<dyn Backend> = Arc::new(
            ClosureBackend::new("live")
                .on_generate(|r| Ok(format!("seen {}", r.prompt)))
                .on_embed(|t| Ok(vec![t.len() as f64, 1.0])),
        );
        let recorder = RecordingBackend::new(live);
        let first = recorder.generate(&req("abc")).unwrap();
        recorder.embed("xyz").unwrap();
        let replay = recorder.to_mock();
        assert_eq!(replay.name(), "live");
        assert_eq!(replay.generate(&req("abc")).unwrap(), first);
        assert_eq!(replay.embed("xyz").unwrap().value, vec![3.0, 1.0]);
        assert!(replay.generate(&req("new")).is_err());
    }
}
