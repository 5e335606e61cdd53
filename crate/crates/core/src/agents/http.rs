//! Chat-completions style HTTP backends.
//!
//! Requests go to `{base_url}/chat/completions` and `{base_url}/embeddings`
//! with a bearer token read from the environment. Provider differences are
//! expressed through [`EndpointConfig`], not code paths.

use std::sync::Arc;

use base64::Engine;
use serde_json::{json, Value};

use super::{
    AgentClient, AgentError, AgentRequest, ChatBackend, ClientError, EmbeddingBackend,
    EmbeddingClient, EndpointConfig, ImageRef, RequestLimiter,
};

pub const ENV_BASE_URL: &str = "SCENE_SYNTH_API_BASE";
pub const ENV_MODEL: &str = "SCENE_SYNTH_MODEL";
pub const ENV_EMBED_MODEL: &str = "SCENE_SYNTH_EMBED_MODEL";
pub const ENV_EMBED_DIM: &str = "SCENE_SYNTH_EMBED_DIM";
pub const ENV_TOKEN: &str = "SCENE_SYNTH_API_KEY";

fn token(endpoint: &EndpointConfig) -> Option<String> {
    std::env::var(&endpoint.token_env)
        .ok()
        .filter(|t| !t.is_empty())
}

fn map_error(e: ureq::Error) -> ClientError {
    match e {
        ureq::Error::StatusCode(429) => ClientError::RateLimited,
        ureq::Error::StatusCode(code) => ClientError::Status(code, "request rejected".into()),
        other => ClientError::Transport(other.to_string()),
    }
}

fn mime_for(path: &str) -> &'static str {
    let lower = path.to_lowercase();
    if lower.ends_with(".png") {
        "image/png"
    } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg"
    } else if lower.ends_with(".ppm") {
        "image/x-portable-pixmap"
    } else {
        "application/octet-stream"
    }
}

fn image_part(image: &ImageRef) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    match image {
        ImageRef::Path(p) => match std::fs::read(p) {
            Ok(bytes) => json!({
                "type": "image_url",
                "image_url": {"url": format!("data:{};base64,{}", mime_for(p), b64.encode(bytes))}
            }),
            // Opaque handles are passed through as URLs.
            Err(_) => json!({"type": "image_url", "image_url": {"url": p}}),
        },
        ImageRef::Inline { mime, data, .. } => json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{mime};base64,{}", b64.encode(data))}
        }),
    }
}

/// Builds the JSON request body. Public so wire compatibility can be tested
/// without a server.
pub fn chat_body(request: &AgentRequest) -> Value {
    let mut content = vec![json!({"type": "text", "text": request.prompt})];
    content.extend(request.images.iter().map(image_part));
    json!({
        "model": request.model,
        "temperature": request.temperature,
        "response_format": {"type": "json_object"},
        "messages": [
            {"role": "system", "content": format!(
                "You are a scene layout assistant. Answer with a single JSON object for the '{}' schema.",
                request.schema.as_str())},
            {"role": "user", "content": content}
        ]
    })
}

/// Pulls the assistant message text out of a chat-completions reply.
pub fn extract_chat_text(reply: &Value) -> Result<String, ClientError> {
    reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ClientError::Decode("missing choices[0].message.content".into()))
}

pub fn extract_embedding(reply: &Value) -> Result<Vec<f64>, ClientError> {
    reply
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| ClientError::Decode("missing data[0].embedding".into()))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| ClientError::Decode("embedding entry is not a number".into()))
        })
        .collect()
}

pub struct HttpChatBackend {
    endpoint: EndpointConfig,
    agent: ureq::Agent,
    limiter: RequestLimiter,
}

impl HttpChatBackend {
    pub fn new(endpoint: EndpointConfig, limiter: RequestLimiter) -> Self {
        Self {
            endpoint,
            agent: ureq::Agent::new_with_defaults(),
            limiter,
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let token = token(&self.endpoint).ok_or_else(|| {
            ClientError::Config(format!("{} is not set", self.endpoint.token_env))
        })?;
        let url = format!("{}/{path}", self.endpoint.base_url.trim_end_matches('/'));
        let _slot = self.limiter.acquire();
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {token}"))
            .send_json(body)
            .map_err(map_error)?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| ClientError::Decode(e.to_string()))
    }
}

impl ChatBackend for HttpChatBackend {
    fn send(&self, request: &AgentRequest) -> Result<String, ClientError> {
        let reply = self.post("chat/completions", &chat_body(request))?;
        extract_chat_text(&reply)
    }
}

pub struct HttpEmbeddingBackend {
    inner: HttpChatBackend,
}

impl HttpEmbeddingBackend {
    pub fn new(endpoint: EndpointConfig, limiter: RequestLimiter) -> Self {
        Self {
            inner: HttpChatBackend::new(endpoint, limiter),
        }
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        let body = json!({"model": self.inner.endpoint.model, "input": text});
        extract_embedding(&self.inner.post("embeddings", &body)?)
    }
}

/// Live clients configured from the environment.
#[derive(Clone, Debug)]
pub struct LiveClients {
    pub agent: AgentClient,
    pub embedder: EmbeddingClient,
}

/// Endpoint settings for the live clients.
#[derive(Clone, Debug, PartialEq)]
pub struct LiveSettings {
    pub base_url: String,
    pub model: String,
    pub embed_model: String,
    pub embed_dim: usize,
    pub token_env: String,
}

impl LiveSettings {
    /// Reads the settings from the environment; only the base URL is required.
    pub fn from_env() -> Result<Self, AgentError> {
        let base_url = std::env::var(ENV_BASE_URL)
            .map_err(|_| AgentError::InvalidConfig(format!("{ENV_BASE_URL} is not set")))?;
        Self::from_env_with(Some(base_url))
    }

    /// Environment values with `base_url` taking precedence when given.
    pub fn from_env_with(base_url: Option<String>) -> Result<Self, AgentError> {
        let base_url = match base_url {
            Some(b) => b,
            None => std::env::var(ENV_BASE_URL)
                .map_err(|_| AgentError::InvalidConfig(format!("{ENV_BASE_URL} is not set")))?,
        };
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gemini-3-flash".into());
        let embed_model =
            std::env::var(ENV_EMBED_MODEL).unwrap_or_else(|_| "text-embedding-004".into());
        let embed_dim: usize = std::env::var(ENV_EMBED_DIM)
            .ok()
            .map(|v| {
                v.parse()
                    .map_err(|_| AgentError::InvalidConfig(format!("{ENV_EMBED_DIM}={v:?}")))
            })
            .transpose()?
            .unwrap_or(768);
        Ok(Self {
            base_url,
            model,
            embed_model,
            embed_dim,
            token_env: ENV_TOKEN.into(),
        })
    }
}

pub fn live_clients(
    settings: &LiveSettings,
    limiter: RequestLimiter,
) -> Result<LiveClients, AgentError> {
    let chat_endpoint = EndpointConfig {
        base_url: settings.base_url.clone(),
        model: settings.model.clone(),
        token_env: settings.token_env.clone(),
    };
    let embed_endpoint = EndpointConfig {
        base_url: settings.base_url.clone(),
        model: settings.embed_model.clone(),
        token_env: settings.token_env.clone(),
    };
    let agent = AgentClient::new(
        Arc::new(HttpChatBackend::new(chat_endpoint.clone(), limiter.clone())),
        chat_endpoint,
    );
    let embedder = EmbeddingClient::new(
        Arc::new(HttpEmbeddingBackend::new(embed_endpoint, limiter)),
        settings.embed_dim,
    )?;
    Ok(LiveClients { agent, embedder })
}

pub fn live_clients_from_env(limiter: RequestLimiter) -> Result<LiveClients, AgentError> {
    live_clients(&LiveSettings::from_env()?, limiter)
}
