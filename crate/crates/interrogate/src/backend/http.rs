//! Client for OpenAI-compatible completion, chat and embedding endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use interrogate_core::EmbeddingVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{finish_completion, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    /// `POST /v1/completions`, flat prompt.
    Completions,
    /// `POST /v1/chat/completions`, prompt sent as a single user turn.
    Chat,
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub id: String,
    pub endpoint: Endpoint,
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<String>,
    pub default_temperature: f64,
    pub max_in_flight: usize,
    pub retry_budget: u32,
    pub retry_base_delay: Duration,
    pub retry_max_delay: Duration,
    pub timeout: Duration,
    pub embedding_model: Option<String>,
    pub dimension: Option<usize>,
}

impl HttpConfig {
    pub fn new(id: &str, endpoint: Endpoint, base_url: &str, model_name: &str) -> Self {
        Self {
            id: id.into(),
            endpoint,
            base_url: base_url.trim_end_matches('/').into(),
            model_name: model_name.into(),
            api_key: None,
            default_temperature: 0.6,
            max_in_flight: 4,
            retry_budget: 3,
            retry_base_delay: Duration::from_millis(500),
            retry_max_delay: Duration::from_secs(30),
            timeout: Duration::from_secs(120),
            embedding_model: None,
            dimension: None,
        }
    }

    /// Reads the API key from the named environment variable.
    pub fn api_key_from_env(mut self, var: &str) -> Result<Self> {
        let key = std::env::var(var).map_err(|_| {
            Error::Config(format!("backend `{}`: environment variable {var} is not set", self.id))
        })?;
        self.api_key = Some(key);
        Ok(self)
    }
}

/// Counting semaphore capping concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fail(BackendError),
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::Config(format!("backend `{}`: {e}", config.id)))?;
        Ok(Self {
            in_flight: InFlight::new(config.max_in_flight),
            config,
            client,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.config
            .retry_base_delay
            .saturating_mul(factor)
            .min(self.config.retry_max_delay)
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx with exponential
    /// backoff up to the retry budget.
    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}{}", self.config.base_url, path);
        let mut retries = 0;
        loop {
            let attempt = {
                let _permit = self.in_flight.acquire();
                self.attempt(&url, body)
            };
            match attempt {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(reason) if retries >= self.config.retry_budget => {
                    return Err(BackendError::Unavailable {
                        backend: self.config.id.clone(),
                        reason: format!("{reason} (after {retries} retries)"),
                    });
                }
                Attempt::Retry(reason) => {
                    let delay = self.backoff(retries);
                    log::warn!(
                        "backend `{}`: {reason}; retry {} in {delay:?}",
                        self.config.id,
                        retries + 1
                    );
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fail(BackendError::Protocol {
                backend: self.config.id.clone(),
                reason: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            });
        }
        match resp.json::<Value>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Retry(format!("unreadable body: {e}")),
        }
    }

    fn protocol(&self, reason: &str) -> BackendError {
        BackendError::Protocol {
            backend: self.config.id.clone(),
            reason: reason.into(),
        }
    }
}

impl GenerationBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn cache_identity(&self) -> String {
        format!("{}#{}", self.config.id, self.config.model_name)
    }

    fn default_temperature(&self) -> f64 {
        self.config.default_temperature
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.validate()?;
        let mut body = json!({
            "model": self.config.model_name,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        match self.config.endpoint {
            Endpoint::Completions => body["prompt"] = json!(request.prompt),
            Endpoint::Chat => {
                body["messages"] = json!([{ "role": "user", "content": request.prompt }])
            }
        }
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        if !request.stop.is_empty() {
            body["stop"] = json!(request.stop);
        }
        let (path, pointer) = match self.config.endpoint {
            Endpoint::Completions => ("/v1/completions", "/choices/0/text"),
            Endpoint::Chat => ("/v1/chat/completions", "/choices/0/message/content"),
        };
        let resp = self.post(path, &body)?;
        let text = resp
            .pointer(pointer)
            .and_then(Value::as_str)
            .ok_or_else(|| self.protocol(&format!("missing {pointer}")))?;
        finish_completion(&self.config.id, text, &request.stop)
    }
}

impl EmbeddingBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn cache_identity(&self) -> String {
        let model = self.config.embedding_model.as_ref().unwrap_or(&self.config.model_name);
        format!("{}#{}", self.config.id, model)
    }

    fn dimension(&self) -> Option<usize> {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty text to embed".into()));
        }
        let model = self.config.embedding_model.as_ref().unwrap_or(&self.config.model_name);
        let resp = self.post("/v1/embeddings", &json!({ "model": model, "input": text }))?;
        let values: Vec<f64> = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| self.protocol("missing /data/0/embedding"))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| self.protocol("non-numeric embedding entry")))
            .collect::<Result<_, _>>()?;
        if let Some(d) = self.config.dimension {
            if values.len() != d {
                return Err(self.protocol(&format!("expected dimension {d}, got {}", values.len())));
            }
        }
        EmbeddingVector::new(values).map_err(|e| self.protocol(&e.to_string()))
    }
}
