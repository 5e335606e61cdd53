//! Uniform client layer over chat, vision and embedding services.
//!
//! Every agent call names a response schema. Replies are parsed into the
//! schema's typed struct and checked before they reach the pipeline, so
//! downstream code can assume well-formed values. Backends are pluggable:
//! [`mock::MockAgent`] and [`mock::MockEmbedder`] give bit-reproducible
//! offline runs, [`http`] speaks a chat-completions style JSON protocol.

pub mod http;
pub mod mock;
mod schema;

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use schema::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited,
    #[error("service returned status {0}: {1}")]
    Status(u16, String),
    #[error("could not decode service reply: {0}")]
    Decode(String),
    #[error("client not configured: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::RateLimited => true,
            ClientError::Status(code, _) => *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{schema} call failed: {source}")]
    Client {
        schema: SchemaId,
        #[source]
        source: ClientError,
    },
    #[error("{schema} reply violates its schema: {message}")]
    Schema { schema: SchemaId, message: String },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding text is empty")]
    EmptyText,
    #[error("invalid client configuration: {0}")]
    InvalidConfig(String),
}

impl AgentError {
    pub fn is_client(&self) -> bool {
        matches!(self, AgentError::Client { .. })
    }
}

/// An image handed to a vision-capable agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ImageRef {
    /// A file on disk, or an opaque handle the backend understands.
    Path(String),
    Inline {
        name: String,
        mime: String,
        #[serde(skip)]
        data: Vec<u8>,
    },
}

impl ImageRef {
    pub fn name(&self) -> &str {
        match self {
            ImageRef::Path(p) => p,
            ImageRef::Inline { name, .. } => name,
        }
    }
}

/// Prompt text plus attachments. `context` is the same information in
/// machine-readable form; offline backends read it instead of the prose.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub images: Vec<ImageRef>,
    pub context: serde_json::Value,
}

impl Prompt {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            images: Vec::new(),
            context: serde_json::Value::Null,
        }
    }

    pub fn with_context(mut self, context: serde_json::Value) -> Self {
        self.context = context;
        self
    }

    pub fn with_images(mut self, images: Vec<ImageRef>) -> Self {
        self.images = images;
        self
    }
}

/// A fully assembled request as seen by a backend.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentRequest {
    pub schema: SchemaId,
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub context: serde_json::Value,
    /// 0 for the first try, 1 for the repair re-prompt.
    pub repair_round: u32,
}

/// Something that answers chat requests with raw reply text.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &AgentRequest) -> Result<String, ClientError>;
}

/// Something that maps text to a raw (unnormalized) vector.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, ClientError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "mock".into(),
            token_env: "SCENE_SYNTH_API_KEY".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::ZERO,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: usize,
    pub schema: SchemaId,
    pub model: String,
    pub temperature: f64,
    pub repair_round: u32,
    pub attempt: u32,
    pub prompt: String,
    pub images: Vec<String>,
    pub reply: Option<String>,
    pub error: Option<String>,
}

/// Shared, append-only record of every request and reply.
#[derive(Clone, Debug, Default)]
pub struct TranscriptLog {
    entries: Arc<Mutex<Vec<TranscriptEntry>>>,
}

impl TranscriptLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, mut entry: TranscriptEntry) {
        let mut guard = self.entries.lock().expect("transcript lock");
        entry.seq = guard.len();
        guard.push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes one JSON file per entry, `NNNN_<schema>.json`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for e in self.entries() {
            let name = format!("{:04}_{}.json", e.seq, e.schema.as_str());
            let body = serde_json::to_string_pretty(&e).expect("transcript serializes");
            std::fs::write(dir.join(name), body + "\n")?;
        }
        Ok(())
    }
}

/// Caps the number of in-flight requests across all clones.
#[derive(Clone, Debug)]
pub struct RequestLimiter {
    inner: Arc<(Mutex<usize>, Condvar)>,
    cap: usize,
}

impl RequestLimiter {
    pub fn new(cap: usize) -> Self {
        Self {
            inner: Arc::new((Mutex::new(0), Condvar::new())),
            cap: cap.max(1),
        }
    }

    pub fn acquire(&self) -> LimiterGuard<'_> {
        let (lock, cv) = &*self.inner;
        let mut n = lock.lock().expect("limiter lock");
        while *n >= self.cap {
            n = cv.wait(n).expect("limiter lock");
        }
        *n += 1;
        LimiterGuard { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.inner.0.lock().expect("limiter lock")
    }
}

impl Default for RequestLimiter {
    fn default() -> Self {
        Self::new(4)
    }
}

pub struct LimiterGuard<'a> {
    limiter: &'a RequestLimiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let (lock, cv) = &*self.limiter.inner;
        *lock.lock().expect("limiter lock") -= 1;
        cv.notify_one();
    }
}

/// A chat agent: backend, model settings, retry policy and transcript sink.
#[derive(Clone)]
pub struct AgentClient {
    backend: Arc<dyn ChatBackend>,
    endpoint: EndpointConfig,
    temperature: Option<f64>,
    retry: RetryPolicy,
    log: TranscriptLog,
}

impl std::fmt::Debug for AgentClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentClient")
            .field("endpoint", &self.endpoint)
            .field("temperature", &self.temperature)
            .finish_non_exhaustive()
    }
}

impl AgentClient {
    pub fn new(backend: Arc<dyn ChatBackend>, endpoint: EndpointConfig) -> Self {
        Self {
            backend,
            endpoint,
            temperature: None,
            retry: RetryPolicy::default(),
            log: TranscriptLog::new(),
        }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(mock::MockAgent::new()), EndpointConfig::default())
            .with_retry(RetryPolicy::immediate())
    }

    /// Forces one temperature for every schema. Must lie in `[0, 2]`.
    pub fn with_temperature(mut self, t: f64) -> Result<Self, AgentError> {
        if !(0.0..=2.0).contains(&t) {
            return Err(AgentError::InvalidConfig(format!(
                "temperature {t} outside [0, 2]"
            )));
        }
        self.temperature = Some(t);
        Ok(self)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_log(mut self, log: TranscriptLog) -> Self {
        self.log = log;
        self
    }

    pub fn log(&self) -> &TranscriptLog {
        &self.log
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    pub fn temperature_for(&self, schema: SchemaId) -> f64 {
        self.temperature
            .unwrap_or_else(|| schema.default_temperature())
    }

    /// Sends the prompt, validates the reply against `R`'s schema, and
    /// re-prompts once with the validation error if the first reply fails.
    pub fn complete<R: StructuredReply>(&self, prompt: Prompt) -> Result<R, AgentError> {
        complete_structured(self, prompt)
    }

    fn send_with_retry(&self, request: &AgentRequest) -> Result<String, AgentError> {
        let mut attempt = 0;
        loop {
            let result = self.backend.send(request);
            self.log.push(TranscriptEntry {
                seq: 0,
                schema: request.schema,
                model: request.model.clone(),
                temperature: request.temperature,
                repair_round: request.repair_round,
                attempt,
                prompt: request.prompt.clone(),
                images: request
                    .images
                    .iter()
                    .map(|i| i.name().to_string())
                    .collect(),
                reply: result.as_ref().ok().cloned(),
                error: result.as_ref().err().map(|e| e.to_string()),
            });
            match result {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt + 1 < self.retry.attempts => {
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(source) => {
                    return Err(AgentError::Client {
                        schema: request.schema,
                        source,
                    })
                }
            }
        }
    }
}

/// See [`AgentClient::complete`].
pub fn complete_structured<R: StructuredReply>(
    client: &AgentClient,
    prompt: Prompt,
) -> Result<R, AgentError> {
    if prompt.text.trim().is_empty() {
        return Err(AgentError::EmptyPrompt);
    }
    let schema = R::SCHEMA;
    let mut request = AgentRequest {
        schema,
        model: client.endpoint.model.clone(),
        temperature: client.temperature_for(schema),
        prompt: format!("{}\n\n{}", prompt.text, schema.instructions()),
        images: prompt.images,
        context: prompt.context,
        repair_round: 0,
    };
    let first_error = match parse_reply::<R>(&client.send_with_retry(&request)?) {
        Ok(v) => return Ok(v),
        Err(msg) => msg,
    };
    request.repair_round = 1;
    request.prompt = format!(
        "{}\n\nYour previous reply was rejected: {first_error}. Reply again with JSON that satisfies the schema.",
        request.prompt
    );
    parse_reply::<R>(&client.send_with_retry(&request)?)
        .map_err(|message| AgentError::Schema { schema, message })
}

/// Extracts the outermost JSON object from `text` and checks it.
pub fn parse_reply<R: StructuredReply>(text: &str) -> Result<R, String> {
    let start = text.find('{').ok_or("reply contains no JSON object")?;
    let end = text.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    let value: R = serde_json::from_str(&text[start..=end]).map_err(|e| e.to_string())?;
    value.check()?;
    Ok(value)
}

/// Unit-length vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `raw`. A zero vector stays zero.
    pub fn normalized(raw: Vec<f64>) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Self(raw);
        }
        Self(raw.into_iter().map(|v| v / norm).collect())
    }

    /// Wraps a vector already known to be unit-norm.
    pub fn from_unit(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone)]
pub struct EmbeddingClient {
    backend: Arc<dyn EmbeddingBackend>,
    dimension: usize,
    retry: RetryPolicy,
}

impl std::fmt::Debug for EmbeddingClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingClient")
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

impl EmbeddingClient {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, dimension: usize) -> Result<Self, AgentError> {
        if dimension == 0 {
            return Err(AgentError::InvalidConfig(
                "embedding dimension is zero".into(),
            ));
        }
        Ok(Self {
            backend,
            dimension,
            retry: RetryPolicy::default(),
        })
    }

    pub fn mock() -> Self {
        Self::new(
            Arc::new(mock::MockEmbedder::default()),
            mock::MOCK_EMBED_DIM,
        )
        .expect("mock dimension is positive")
        .with_retry(RetryPolicy::immediate())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, AgentError> {
        embed(self, text)
    }
}

/// Embeds `text` and normalizes the result to unit length.
pub fn embed(client: &EmbeddingClient, text: &str) -> Result<Embedding, AgentError> {
    if text.trim().is_empty() {
        return Err(AgentError::EmptyText);
    }
    let mut attempt = 0;
    let raw = loop {
        match client.backend.embed_raw(text) {
            Ok(v) => break v,
            Err(e) if e.is_retryable() && attempt + 1 < client.retry.attempts => {
                std::thread::sleep(client.retry.base_delay * 2u32.pow(attempt));
                attempt += 1;
            }
            Err(source) => {
                return Err(AgentError::Client {
                    schema: SchemaId::Embedding,
                    source,
                })
            }
        }
    };
    if raw.len() != client.dimension {
        return Err(AgentError::DimensionMismatch {
            expected: client.dimension,
            got: raw.len(),
        });
    }
    Ok(Embedding::normalized(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mock::ScriptedBackend;

    fn scripted(replies: Vec<Result<String, ClientError>>) -> (AgentClient, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(replies));
        let client = AgentClient::new(backend.clone(), EndpointConfig::default())
            .with_retry(RetryPolicy::immediate());
        (client, backend)
    }

    #[test]
    fn transport_errors_are_retried_three_times() {
        let (client, backend) = scripted(vec![
            Err(ClientError::Transport("reset".into())),
            Err(ClientError::RateLimited),
            Ok(r#"{"objects": ["bed"]}"#.into()),
        ]);
        let reply: EnrichmentReply = client.complete(Prompt::new("enrich")).unwrap();
        assert_eq!(reply.objects, vec!["bed"]);
        assert_eq!(backend.requests().len(), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let (client, _) = scripted(vec![
            Err(ClientError::Transport("a".into())),
            Err(ClientError::Transport("b".into())),
            Err(ClientError::Transport("c".into())),
            Ok(r#"{"objects": []}"#.into()),
        ]);
        let err = client
            .complete::<EnrichmentReply>(Prompt::new("enrich"))
            .unwrap_err();
        assert!(err.is_client());
    }

    #[test]
    fn missing_field_gets_one_repair_then_schema_error() {
        let (client, backend) = scripted(vec![
            Ok(r#"{"summary": "a bedroom"}"#.into()),
            Ok(r#"{"summary": "a bedroom", "relations": []}"#.into()),
        ]);
        let err = client
            .complete::<SceneParseReply>(Prompt::new("parse"))
            .unwrap_err();
        assert!(matches!(err, AgentError::Schema { .. }));
        let reqs = backend.requests();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[1].repair_round, 1);
        assert!(reqs[1].prompt.contains("previous reply was rejected"));
    }

    #[test]
    fn repair_can_succeed() {
        let (client, _) = scripted(vec![
            Ok("not json".into()),
            Ok(r#"```json
{"summary": "a bedroom", "relations": ["bed against wall"], "scales": ["bed is large"]}
```"#
                .into()),
        ]);
        let r: SceneParseReply = client.complete(Prompt::new("parse")).unwrap();
        assert_eq!(r.summary, "a bedroom");
    }

    #[test]
    fn empty_prompt_rejected() {
        let (client, _) = scripted(vec![]);
        assert_eq!(
            client.complete::<EnrichmentReply>(Prompt::new("  ")),
            Err(AgentError::EmptyPrompt)
        );
    }

    #[test]
    fn temperatures_follow_call_kind() {
        let client = AgentClient::mock();
        assert_eq!(client.temperature_for(SchemaId::Diagnosis), 0.3);
        for s in [
            SchemaId::ZoneGrounding,
            SchemaId::DominantProposal,
            SchemaId::AccessoryProposal,
            SchemaId::SceneParse,
            SchemaId::ObjectEnrichment,
        ] {
            assert_eq!(client.temperature_for(s), 0.7);
        }
        assert!(AgentClient::mock().with_temperature(2.5).is_err());
        let forced = AgentClient::mock().with_temperature(0.0).unwrap();
        assert_eq!(forced.temperature_for(SchemaId::Diagnosis), 0.0);
    }

    #[test]
    fn transcript_records_temperature() {
        let client = AgentClient::mock();
        let _: EnrichmentReply = client
            .complete(
                Prompt::new("list objects for a cozy bedroom")
                    .with_context(serde_json::json!({"description": "a cozy bedroom"})),
            )
            .unwrap();
        let log = client.log().entries();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].temperature, 0.7);
        assert_eq!(log[0].schema, SchemaId::ObjectEnrichment);
    }

    #[test]
    fn limiter_caps_in_flight() {
        let lim = RequestLimiter::new(2);
        let a = lim.acquire();
        let _b = lim.acquire();
        assert_eq!(lim.in_flight(), 2);
        drop(a);
        assert_eq!(lim.in_flight(), 1);
    }

    #[test]
    fn embedding_is_unit_norm_and_checked() {
        let e = EmbeddingClient::mock();
        let v = e.embed("a cozy bedroom").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert_eq!(v.dim(), e.dimension());
        assert_eq!(e.embed(" "), Err(AgentError::EmptyText));

        struct Wrong;
        impl EmbeddingBackend for Wrong {
            fn embed_raw(&self, _: &str) -> Result<Vec<f64>, ClientError> {
                Ok(vec![1.0; 3])
            }
        }
        let bad = EmbeddingClient::new(Arc::new(Wrong), 4).unwrap();
        assert_eq!(
            bad.embed("x"),
            Err(AgentError::DimensionMismatch {
                expected: 4,
                got: 3
            })
        );
    }
}
