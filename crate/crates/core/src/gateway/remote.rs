//! HTTP adapters: one chat-completion style generator and one embedding
//! endpoint. Vendor differences live in configuration (request template and
//! response pointer), not in code.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use super::{Backend, GatewayError, GenerateRequest, Reply, DEFAULT_EMBEDDING_DIM};

pub const MAX_RETRIES_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Generate,
    Embed,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Generate => "generate",
            BackendKind::Embed => "embed",
        })
    }
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    2
}

/// Configuration of one remote backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    pub endpoint: String,
    pub model_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Embedding profile dimension; defaults to 2048 for embed backends.
    #[serde(default)]
    pub dim: Option<usize>,
    /// JSON body template. String values `{{model_id}}`, `{{prompt}}`,
    /// `{{image_data_url}}` and `{{text}}` are substituted.
    #[serde(default)]
    pub request_template: Option<Value>,
    /// JSON pointer to the text or vector inside the response body.
    #[serde(default)]
    pub response_pointer: Option<String>,
}

impl BackendSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("backend name is empty".into());
        }
        if self.timeout_ms == 0 {
            return Err(format!("backend {}: timeout_ms must be > 0", self.name));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(format!(
                "backend {}: max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.name, self.max_retries
            ));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(format!(
                "backend {}: endpoint {:?} is not an http(s) URL",
                self.name, self.endpoint
            ));
        }
        if self.dim == Some(0) {
            return Err(format!("backend {}: dim must be > 0", self.name));
        }
        if let Some(pointer) = &self.response_pointer {
            if !pointer.is_empty() && !pointer.starts_with('/') {
                return Err(format!(
                    "backend {}: response_pointer must start with '/'",
                    self.name
                ));
            }
        }
        Ok(())
    }

    pub fn profile_dim(&self) -> Option<usize> {
        match self.kind {
            BackendKind::Embed => Some(self.dim.unwrap_or(DEFAULT_EMBEDDING_DIM)),
            BackendKind::Generate => None,
        }
    }

    fn pointer(&self) -> &str {
        match (&self.response_pointer, self.kind) {
            (Some(p), _) => p,
            (None, BackendKind::Generate) => "/choices/0/message/content",
            (None, BackendKind::Embed) => "/data/0/embedding",
        }
    }
}

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_delay: Duration::from_millis(250),
            factor: 2.0,
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            factor: 2.0,
            max_delay: Duration::ZERO,
        }
    }

    /// Upper bound of the wait before retry number `retry` (0-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        let scaled = self.base_delay.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(scaled.min(self.max_delay.as_secs_f64()).max(0.0))
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let ceiling = self.ceiling(retry);
        if ceiling.is_zero() {
            return ceiling;
        }
        Duration::from_secs_f64(rand::thread_rng().gen_range(0.0..=ceiling.as_secs_f64()))
    }
}

/// Failure modes of a single HTTP exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportFault {
    Timeout,
    Connect(String),
    Status(u16),
    Decode(String),
}

impl TransportFault {
    fn retryable(&self) -> bool {
        match self {
            TransportFault::Timeout | TransportFault::Connect(_) => true,
            TransportFault::Status(code) => *code == 429 || (500..=599).contains(code),
            TransportFault::Decode(_) => false,
        }
    }
}

/// One JSON POST. Abstracted so retry logic is testable without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportFault>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportFault> {
        let mut request = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                TransportFault::Timeout
            } else {
                TransportFault::Connect(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportFault::Status(status.as_u16()));
        }
        response.json::<Value>().map_err(|e| {
            if e.is_timeout() {
                TransportFault::Timeout
            } else {
                TransportFault::Decode(e.to_string())
            }
        })
    }
}

pub struct RemoteBackend {
    spec: BackendSpec,
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
}

impl RemoteBackend {
    pub fn new(spec: BackendSpec, transport: Arc<dyn Transport>) -> Self {
        Self {
            spec,
            transport,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn api_key(&self) -> Result<Option<String>, GatewayError> {
        match &self.spec.api_key_env {
            None => Ok(None),
            Some(var) if var.is_empty() => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| GatewayError::MissingApiKey {
                    backend: self.spec.name.clone(),
                    var: var.clone(),
                }),
        }
    }

    fn check_kind(&self, requested: BackendKind) -> Result<(), GatewayError> {
        if self.spec.kind != requested {
            return Err(GatewayError::WrongKind {
                backend: self.spec.name.clone(),
                requested,
            });
        }
        Ok(())
    }

    /// POSTs `body`, retrying transient faults up to `max_retries` times.
    fn exchange(&self, body: &Value) -> Result<Reply<Value>, GatewayError> {
        let key = self.api_key()?;
        let timeout = Duration::from_millis(self.spec.timeout_ms);
        let mut retries = 0;
        loop {
            match self
                .transport
                .post_json(&self.spec.endpoint, key.as_deref(), body, timeout)
            {
                Ok(value) => return Ok(Reply { value, retries }),
                Err(fault) if fault.retryable() && retries < self.spec.max_retries => {
                    log::warn!(
                        "backend {}: {:?}, retry {} of {}",
                        self.spec.name,
                        fault,
                        retries + 1,
                        self.spec.max_retries
                    );
                    std::thread::sleep(self.policy.delay(retries));
                    retries += 1;
                }
                Err(fault) => return Err(self.fault_error(fault, retries)),
            }
        }
    }

    fn fault_error(&self, fault: TransportFault, retries: u32) -> GatewayError {
        let backend = self.spec.name.clone();
        match fault {
            TransportFault::Timeout => GatewayError::Timeout { backend, retries },
            TransportFault::Connect(message) => GatewayError::Transport {
                backend,
                retries,
                message,
            },
            TransportFault::Status(status) => GatewayError::Status {
                backend,
                status,
                retries,
            },
            TransportFault::Decode(message) => GatewayError::MalformedResponse { backend, message },
        }
    }

    fn render_body(&self, substitutions: &[(&str, &str)], default: Value) -> Value {
        match &self.spec.request_template {
            Some(template) => substitute(template, substitutions),
            None => default,
        }
    }
}

fn substitute(template: &Value, substitutions: &[(&str, &str)]) -> Value {
    match template {
        Value::String(s) => {
            let mut out = s.clone();
            for (key, value) in substitutions {
                out = out.replace(&format!("{{{{{key}}}}}"), value);
            }
            Value::String(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, substitutions)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), substitute(v, substitutions)))
                .collect(),
        ),
        other => other.clone(),
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Reply<String>, GatewayError> {
        self.check_kind(BackendKind::Generate)?;
        let image_url = req.image.as_ref().map(|i| i.data_url()).unwrap_or_default();
        let mut content = vec![json!({ "type": "text", "text": req.prompt })];
        if req.image.is_some() {
            content.push(json!({ "type": "image_url", "image_url": { "url": image_url } }));
        }
        let default = json!({
            "model": self.spec.model_id,
            "messages": [{ "role": "user", "content": content }],
        });
        let body = self.render_body(
            &[
                ("model_id", &self.spec.model_id),
                ("prompt", &req.prompt),
                ("image_data_url", &image_url),
            ],
            default,
        );
        let reply = self.exchange(&body)?;
        let text = match reply.value.pointer(self.spec.pointer()) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => {
                return Err(GatewayError::MalformedResponse {
                    backend: self.spec.name.clone(),
                    message: format!("expected text at {}, found {other}", self.spec.pointer()),
                })
            }
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse {
                backend: self.spec.name.clone(),
                retries: reply.retries,
            });
        }
        Ok(Reply {
            value: text,
            retries: reply.retries,
        })
    }

    fn embed(&self, text: &str) -> Result<Reply<Vec<f64>>, GatewayError> {
        self.check_kind(BackendKind::Embed)?;
        let default = json!({ "model": self.spec.model_id, "input": [text] });
        let body = self.render_body(&[("model_id", &self.spec.model_id), ("text", text)], default);
        let reply = self.exchange(&body)?;
        let malformed = |message: String| GatewayError::MalformedResponse {
            backend: self.spec.name.clone(),
            message,
        };
        let items = reply
            .value
            .pointer(self.spec.pointer())
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("no array at {}", self.spec.pointer())))?;
        let values = items
            .iter()
            .enumerate()
            .map(|(index, v)| {
                // serde_json maps NaN/inf to null
                v.as_f64().ok_or(GatewayError::NonFinite {
                    backend: self.spec.name.clone(),
                    index,
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Reply {
            value: values,
            retries: reply.retries,
        })
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.spec.profile_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{embed_text, generate_interpretation};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    /// Fails with the queued faults first, then answers with `reply`.
    struct FaultInjector {
        faults: Mutex<Vec<TransportFault>>,
        reply: Value,
        attempts: AtomicU32,
        last_body: Mutex<Option<Value>>,
    }

    impl FaultInjector {
        fn new(faults: Vec<TransportFault>, reply: Value) -> Arc<Self> {
            Arc::new(Self {
                faults: Mutex::new(faults.into_iter().rev().collect()),
                reply,
                attempts: AtomicU32::new(0),
                last_body: Mutex::new(None),
            })
        }
    }

    impl Transport for FaultInjector {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            body: &Value,
            _timeout: Duration,
        ) -> Result<Value, TransportFault> {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            *self.last_body.lock().unwrap() = Some(body.clone());
            match self.faults.lock().unwrap().pop() {
                Some(fault) => Err(fault),
                None => Ok(self.reply.clone()),
            }
        }
    }

    fn spec(kind: BackendKind, max_retries: u32) -> BackendSpec {
        BackendSpec {
            name: "remote".into(),
            kind,
            endpoint: "http://localhost:1/v1".into(),
            model_id: "m".into(),
            timeout_ms: 1000,
            max_retries,
            api_key_env: None,
            dim: None,
            request_template: None,
            response_pointer: None,
        }
    }

    fn chat_reply(text: &str) -> Value {
        json!({ "choices": [{ "message": { "content": text } }] })
    }

    fn req() -> GenerateRequest {
        GenerateRequest::new(None, "interpret", "p.v1").unwrap()
    }

    #[test]
    fn two_transport_faults_then_success_reports_two_retries() {
        let transport = FaultInjector::new(
            vec![
                TransportFault::Connect("reset".into()),
                TransportFault::Connect("reset".into()),
            ],
            chat_reply("a complete house"),
        );
        let backend = RemoteBackend::new(spec(BackendKind::Generate, 2), transport.clone())
            .with_policy(RetryPolicy::immediate());
        let out = generate_interpretation(&backend, &req()).unwrap();
        assert_eq!(out.retries, 2);
        assert_eq!(out.text.text, "a complete house");
        assert_eq!(transport.attempts.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn attempts_never_exceed_one_plus_max_retries() {
        for max_retries in 0..=MAX_RETRIES_LIMIT {
            let transport = FaultInjector::new(vec![TransportFault::Timeout; 10], chat_reply("x"));
            let backend =
                RemoteBackend::new(spec(BackendKind::Generate, max_retries), transport.clone())
                    .with_policy(RetryPolicy::immediate());
            let err = generate_interpretation(&backend, &req()).unwrap_err();
            assert_eq!(err, GatewayError::Timeout { backend: "remote".into(), retries: max_retries });
            assert_eq!(transport.attempts.load(Ordering::SeqCst), 1 + max_retries);
        }
    }

    #[test]
    fn client_errors_are_not_retried() {
        let transport = FaultInjector::new(vec![TransportFault::Status(401)], chat_reply("x"));
        let backend = RemoteBackend::new(spec(BackendKind::Generate, 3), transport.clone())
            .with_policy(RetryPolicy::immediate());
        assert!(matches!(
            generate_interpretation(&backend, &req()),
            Err(GatewayError::Status { status: 401, retries: 0, .. })
        ));
        assert_eq!(transport.attempts.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rate_limits_are_retried() {
        let transport = FaultInjector::new(vec![TransportFault::Status(429)], chat_reply("ok"));
        let backend = RemoteBackend::new(spec(BackendKind::Generate, 1), transport)
            .with_policy(RetryPolicy::immediate());
        assert_eq!(generate_interpretation(&backend, &req()).unwrap().retries, 1);
    }

    #[test]
    fn empty_model_response_is_distinct() {
        let transport = FaultInjector::new(vec![], chat_reply("   "));
        let backend = RemoteBackend::new(spec(BackendKind::Generate, 0), transport);
        assert!(matches!(
            generate_interpretation(&backend, &req()),
            Err(GatewayError::EmptyResponse { .. })
        ));
    }

    #[test]
    fn generate_body_carries_model_prompt_and_image() {
        let transport = FaultInjector::new(vec![], chat_reply("ok"));
        let backend = RemoteBackend::new(spec(BackendKind::Generate, 0), transport.clone());
        let image = crate::case::DrawingArtifact::new(vec![1, 2, 3], crate::case::MediaType::Png);
        let r = GenerateRequest::new(Some(image), "look", "p").unwrap();
        backend.generate(&r).unwrap();
        let body = transport.last_body.lock().unwrap().clone().unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["content"][0]["text"], "look");
        assert_eq!(
            body["messages"][0]["content"][1]["image_url"]["url"],
            "data:image/png;base64,AQID"
        );
    }

    #[test]
    fn request_template_and_pointer_are_configuration() {
        let transport = FaultInjector::new(vec![], json!({ "output": { "text": "templated" } }));
        let mut s = spec(BackendKind::Generate, 0);
        s.request_template = Some(json!({ "model_name": "{{model_id}}", "input": "Q: {{prompt}}" }));
        s.response_pointer = Some("/output/text".into());
        let backend = RemoteBackend::new(s, transport.clone());
        assert_eq!(backend.generate(&req()).unwrap().value, "templated");
        let body = transport.last_body.lock().unwrap().clone().unwrap();
        assert_eq!(body, json!({ "model_name": "m", "input": "Q: interpret" }));
    }

    #[test]
    fn embedding_dimension_mismatch_against_2048_profile() {
        let values: Vec<f64> = vec![0.1; 1024];
        let transport = FaultInjector::new(vec![], json!({ "data": [{ "embedding": values }] }));
        let backend = RemoteBackend::new(spec(BackendKind::Embed, 0), transport);
        assert_eq!(backend.embedding_dim(), Some(2048));
        assert_eq!(
            embed_text(&backend, "text"),
            Err(GatewayError::DimensionMismatch {
                backend: "remote".into(),
                expected: 2048,
                actual: 1024
            })
        );
    }

    #[test]
    fn embedding_with_null_entry_is_non_finite() {
        let transport = FaultInjector::new(vec![], json!({ "data": [{ "embedding": [1.0, null] }] }));
        let mut s = spec(BackendKind::Embed, 0);
        s.dim = Some(2);
        let backend = RemoteBackend::new(s, transport);
        assert!(matches!(
            embed_text(&backend, "t"),
            Err(GatewayError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let transport = FaultInjector::new(vec![], chat_reply("x"));
        let backend = RemoteBackend::new(spec(BackendKind::Embed, 0), transport);
        assert!(matches!(
            backend.generate(&req()),
            Err(GatewayError::WrongKind { .. })
        ));
    }

    #[test]
    fn missing_api_key_env_is_an_error() {
        let transport = FaultInjector::new(vec![], chat_reply("x"));
        let mut s = spec(BackendKind::Generate, 0);
        s.api_key_env = Some("HTP_TEST_KEY_THAT_IS_NEVER_SET".into());
        let backend = RemoteBackend::new(s, transport);
        assert!(matches!(
            backend.generate(&req()),
            Err(GatewayError::MissingApiKey { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(BackendKind::Generate, 6);
        assert!(s.validate().is_err());
        s.max_retries = 5;
        assert!(s.validate().is_ok());
        s.timeout_ms = 0;
        assert!(s.validate().is_err());
        s.timeout_ms = 1;
        s.endpoint = "ftp://x".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn backoff_ceiling_doubles_from_250ms_and_jitter_stays_below() {
        let p = RetryPolicy::default();
        assert_eq!(p.ceiling(0), Duration::from_millis(250));
        assert_eq!(p.ceiling(1), Duration::from_millis(500));
        assert_eq!(p.ceiling(2), Duration::from_millis(1000));
        assert_eq!(p.ceiling(20), Duration::from_secs(30));
        for retry in 0..5 {
            assert!(p.delay(retry) <= p.ceiling(retry));
        }
    }
}
