//! Text-generation and embedding providers behind uniform interfaces.

pub mod http;
pub mod simulated;

use std::collections::BTreeMap;
use std::sync::Arc;

use interrogate_core::ngram::fnv1a64;
use interrogate_core::EmbeddingVector;
use serde::{Deserialize, Serialize};

use crate::error::BackendError;

pub const DEFAULT_FORWARD_MAX_TOKENS: u32 = 256;
pub const DEFAULT_BACKWARD_MAX_TOKENS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            temperature,
            max_tokens,
            seed: None,
            stop: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_stop<I, S>(mut self, stop: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.stop = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A text generator (forward model, backward model, or judge).
///
/// Simulated backends are deterministic in `(prompt, temperature, seed)`;
/// HTTP backends make no such promise.
pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Identity folded into cache keys. Includes the upstream model name where
    /// there is one, so swapping models never aliases cached completions.
    fn cache_identity(&self) -> String {
        self.id().to_string()
    }

    fn default_temperature(&self) -> f64;

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;

    fn cache_identity(&self) -> String {
        self.id().to_string()
    }

    /// Output dimension, when known before the first call.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError>;
}

/// Cuts a raw completion at the earliest stop sequence and trims it.
pub fn finish_completion(
    backend: &str,
    raw: &str,
    stop: &[String],
) -> Result<String, BackendError> {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.find(s.as_str()))
        .min()
        .unwrap_or(raw.len());
    let text = raw[..cut].trim();
    if text.is_empty() {
        return Err(BackendError::EmptyGeneration(backend.to_string()));
    }
    Ok(text.to_string())
}

/// `base ^ fnv1a64(label, index)`: the per-call seed for a labelled stream.
pub fn derive_seed(base: u64, label: &str, index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(label.len() + 9);
    bytes.extend_from_slice(label.as_bytes());
    bytes.push(0x1f);
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    base ^ fnv1a64(&bytes)
}

/// Backends by id.
#[derive(Default, Clone)]
pub struct Registry {
    generators: BTreeMap<String, Arc<dyn GenerationBackend>>,
    embedders: BTreeMap<String, Arc<dyn EmbeddingBackend>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_generator(&mut self, backend: Arc<dyn GenerationBackend>) {
        self.generators.insert(backend.id().to_string(), backend);
    }

    pub fn add_embedder(&mut self, backend: Arc<dyn EmbeddingBackend>) {
        self.embedders.insert(backend.id().to_string(), backend);
    }

    pub fn generator(&self, id: &str) -> crate::Result<Arc<dyn GenerationBackend>> {
        self.generators
            .get(id)
            .cloned()
            .ok_or_else(|| crate::Error::Config(format!("no generation backend `{id}`")))
    }

    pub fn embedder(&self, id: &str) -> crate::Result<Arc<dyn EmbeddingBackend>> {
        self.embedders
            .get(id)
            .cloned()
            .ok_or_else(|| crate::Error::Config(format!("no embedding backend `{id}`")))
    }

    pub fn generator_ids(&self) -> impl Iterator<Item = &str> {
        self.generators.keys().map(String::as_str)
    }

    /// Wraps every backend with the response cache.
    pub fn cached(&self, store: &Arc<crate::cache::CacheStore>) -> Registry {
        let mut out = Registry::new();
        for g in self.generators.values() {
            out.add_generator(Arc::new(crate::cache::CachedGenerator::new(
                g.clone(),
                store.clone(),
            )));
        }
        for e in self.embedders.values() {
            out.add_embedder(Arc::new(crate::cache::CachedEmbedder::new(
                e.clone(),
                store.clone(),
            )));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_cut_at_stop_and_trimmed() {
        let stop = vec!["Query:".to_string(), "Answer:".to_string()];
        assert_eq!(
            finish_completion("b", " Paris \n\nQuery: next", &stop).unwrap(),
            "Paris"
        );
        assert_eq!(finish_completion("b", "a\nb  \n", &[]).unwrap(), "a\nb");
        assert_eq!(
            finish_completion("b", "  \nAnswer: x", &stop),
            Err(BackendError::EmptyGeneration("b".into()))
        );
    }

    #[test]
    fn seeds_differ_by_label_and_index() {
        let a = derive_seed(7, "b1", 0);
        assert_eq!(a, derive_seed(7, "b1", 0));
        assert_ne!(a, derive_seed(7, "b1", 1));
        assert_ne!(a, derive_seed(7, "b2", 0));
        assert_ne!(a, derive_seed(8, "b1", 0));
    }

    #[test]
    fn request_validation() {
        assert!(GenerationRequest::new("p", 0.6, 8).validate().is_ok());
        assert!(GenerationRequest::new(" ", 0.6, 8).validate().is_err());
        assert!(GenerationRequest::new("p", 0.0, 8).validate().is_err());
        assert!(GenerationRequest::new("p", f64::NAN, 8).validate().is_err());
        assert!(GenerationRequest::new("p", 0.6, 0).validate().is_err());
    }
}
