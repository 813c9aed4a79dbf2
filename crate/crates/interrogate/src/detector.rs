//! Hallucination detection by query reconstruction.
//!
//! 1. Forward: generate an answer `A*` for the query from the few-shot prompt.
//! 2. Backward: each backward model reconstructs the query from `A*` under the
//!    reversed prompt, `k` times, at scheduled temperatures.
//! 3. Embed the original query and every reconstruction.
//! 4. Average (or max) the cosine similarities over the pooled `k * |B|`
//!    reconstructions; a score below `tau` flags a hallucination.

use std::collections::BTreeMap;
use std::sync::Arc;

use interrogate_core::{
    score_reconstructions, AggregationMode, EmbeddingVector, PromptSpec, TemperatureSchedule,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{
    derive_seed, EmbeddingBackend, GenerationBackend, GenerationRequest,
    DEFAULT_BACKWARD_MAX_TOKENS, DEFAULT_FORWARD_MAX_TOKENS,
};
use crate::error::{BackendError, Error, Result};

pub const OUTCOME_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub k: usize,
    pub tau: f64,
    pub aggregation: AggregationMode,
    pub variable_temperature: bool,
    pub backward_backends: Vec<String>,
    pub embedding_backend: String,
}

impl DetectorConfig {
    pub fn new(backward_backends: Vec<String>, embedding_backend: impl Into<String>) -> Self {
        Self {
            k: 5,
            tau: 0.91,
            aggregation: AggregationMode::Average,
            variable_temperature: true,
            backward_backends,
            embedding_backend: embedding_backend.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [-1, 1], got {}", self.tau)));
        }
        if self.backward_backends.is_empty() {
            return Err(Error::Config("at least one backward backend is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub backend_id: String,
    pub pass_index: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Empty when the backend failed or returned nothing.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub schema_version: u32,
    pub query: String,
    pub answer: String,
    pub base_seed: u64,
    pub reconstructions: Vec<Reconstruction>,
    pub per_reconstruction_similarity: Vec<f64>,
    pub score: f64,
    /// true = hallucination
    pub verdict: bool,
    pub config: DetectorConfig,
}

impl DetectionOutcome {
    /// Score and verdict under another aggregation, from the stored similarities.
    pub fn rescore(&self, mode: AggregationMode) -> Result<(f64, bool)> {
        let s = interrogate_core::aggregate_similarities(&self.per_reconstruction_similarity, mode)?;
        Ok((s, s < self.config.tau))
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub struct Detector {
    config: DetectorConfig,
    backward: Vec<Arc<dyn GenerationBackend>>,
    embedder: Arc<dyn EmbeddingBackend>,
    forward_max_tokens: u32,
    backward_max_tokens: u32,
}

impl Detector {
    /// `backward` must line up with `config.backward_backends`.
    pub fn new(
        config: DetectorConfig,
        backward: Vec<Arc<dyn GenerationBackend>>,
        embedder: Arc<dyn EmbeddingBackend>,
    ) -> Result<Self> {
        config.validate()?;
        let ids: Vec<&str> = backward.iter().map(|b| b.id()).collect();
        if ids != config.backward_backends.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config(format!(
                "backward backends {ids:?} do not match config {:?}",
                config.backward_backends
            )));
        }
        if embedder.id() != config.embedding_backend {
            return Err(Error::Config(format!(
                "embedding backend `{}` does not match config `{}`",
                embedder.id(),
                config.embedding_backend
            )));
        }
        Ok(Self {
            config,
            backward,
            embedder,
            forward_max_tokens: DEFAULT_FORWARD_MAX_TOKENS,
            backward_max_tokens: DEFAULT_BACKWARD_MAX_TOKENS,
        })
    }

    /// Builds a detector from a registry, resolving ids from the config.
    pub fn from_registry(config: DetectorConfig, registry: &crate::backend::Registry) -> Result<Self> {
        let backward = config
            .backward_backends
            .iter()
            .map(|id| registry.generator(id))
            .collect::<Result<Vec<_>>>()?;
        let embedder = registry.embedder(&config.embedding_backend)?;
        Self::new(config, backward, embedder)
    }

    pub fn with_max_tokens(mut self, forward: u32, backward: u32) -> Self {
        self.forward_max_tokens = forward;
        self.backward_max_tokens = backward;
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Same backends, different `k`.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let mut config = self.config.clone();
        config.k = k;
        config.validate()?;
        Ok(Self {
            config,
            backward: self.backward.clone(),
            embedder: self.embedder.clone(),
            forward_max_tokens: self.forward_max_tokens,
            backward_max_tokens: self.backward_max_tokens,
        })
    }

    fn stops(spec: &PromptSpec) -> Vec<String> {
        vec![spec.query_label.trim().to_string(), spec.answer_label.trim().to_string()]
    }

    /// Step 1: the forward answer `A*`.
    pub fn forward_answer(
        &self,
        query: &str,
        spec: &PromptSpec,
        forward: &dyn GenerationBackend,
        base_seed: u64,
    ) -> Result<String> {
        let prompt = spec.render_forward(query)?;
        let req = GenerationRequest::new(prompt, forward.default_temperature(), self.forward_max_tokens)
            .with_seed(derive_seed(base_seed, &format!("forward/{}", forward.id()), 0))
            .with_stop(Self::stops(spec));
        let raw = forward.generate(&req)?;
        let answer = spec.truncate_completion(&raw);
        if answer.is_empty() {
            return Err(BackendError::EmptyGeneration(forward.id().to_string()).into());
        }
        Ok(answer.to_string())
    }

    /// Step 2: `k` reconstructions per backward backend, in (backend, pass)
    /// order regardless of completion order.
    pub fn reconstruct_queries(
        &self,
        answer: &str,
        spec: &PromptSpec,
        base_seed: u64,
    ) -> Result<Vec<Reconstruction>> {
        let prompt = spec.render_backward(answer)?;
        let mut jobs = Vec::with_capacity(self.config.k * self.backward.len());
        for backend in &self.backward {
            let schedule = TemperatureSchedule::new(backend.default_temperature(), self.config.k)?;
            let temps = if self.config.variable_temperature {
                schedule.temperatures()
            } else {
                schedule.constant()
            };
            for (pass, t) in temps.into_iter().enumerate() {
                let seed = derive_seed(base_seed, backend.id(), pass);
                jobs.push((backend.clone(), pass, t, seed));
            }
        }
        let stops = Self::stops(spec);
        let results: Vec<(Reconstruction, Option<BackendError>)> = jobs
            .into_par_iter()
            .map(|(backend, pass, temperature, seed)| {
                let req = GenerationRequest::new(prompt.clone(), temperature, self.backward_max_tokens)
                    .with_seed(seed)
                    .with_stop(stops.clone());
                let (text, err) = match backend.generate(&req) {
                    Ok(raw) => (spec.truncate_completion(&raw).to_string(), None),
                    Err(e) => {
                        log::debug!("reconstruction {}#{pass} failed: {e}", backend.id());
                        (String::new(), Some(e))
                    }
                };
                let rec = Reconstruction {
                    backend_id: backend.id().to_string(),
                    pass_index: pass,
                    temperature,
                    seed,
                    text,
                };
                (rec, err)
            })
            .collect();
        let transport_failures = results
            .iter()
            .filter(|(_, e)| matches!(e, Some(BackendError::Unavailable { .. })))
            .count();
        if transport_failures == results.len() {
            let reason = results
                .iter()
                .find_map(|(_, e)| e.as_ref())
                .map_or_else(String::new, ToString::to_string);
            return Err(Error::DetectionInfeasible(format!(
                "every reconstruction failed: {reason}"
            )));
        }
        Ok(results.into_iter().map(|(r, _)| r).collect())
    }

    /// Steps 3 and 4: per-reconstruction similarities and the aggregate score.
    pub fn score(&self, query: &str, reconstructions: &[Reconstruction]) -> Result<(Vec<f64>, f64)> {
        if reconstructions.is_empty() {
            return Err(Error::Core(interrogate_core::Error::Empty("reconstructions")));
        }
        let embed = |text: &str| -> Result<EmbeddingVector> {
            self.embedder
                .embed(text)
                .map_err(|e| Error::DetectionInfeasible(format!("embedding failed: {e}")))
        };
        let query_vec = embed(query)?;
        let mut distinct: BTreeMap<&str, EmbeddingVector> = BTreeMap::new();
        for r in reconstructions {
            if !r.text.is_empty() && !distinct.contains_key(r.text.as_str()) {
                distinct.insert(&r.text, embed(&r.text)?);
            }
        }
        let vecs: Vec<Option<EmbeddingVector>> = reconstructions
            .iter()
            .map(|r| distinct.get(r.text.as_str()).cloned())
            .collect();
        let (sims, score) = score_reconstructions(&query_vec, &vecs, self.config.aggregation)
            .map_err(|e| Error::DetectionInfeasible(format!("scoring failed: {e}")))?;
        Ok((sims, score))
    }

    pub fn detect(
        &self,
        query: &str,
        spec: &PromptSpec,
        forward: &dyn GenerationBackend,
        base_seed: u64,
    ) -> Result<DetectionOutcome> {
        let answer = self.forward_answer(query, spec, forward, base_seed)?;
        self.detect_given_answer(query, &answer, spec, base_seed)
    }

    /// Detection for a pre-generated answer (skips the forward pass).
    pub fn detect_given_answer(
        &self,
        query: &str,
        answer: &str,
        spec: &PromptSpec,
        base_seed: u64,
    ) -> Result<DetectionOutcome> {
        let query = query.trim();
        let answer = answer.trim();
        if query.is_empty() {
            return Err(interrogate_core::Error::Empty("query").into());
        }
        if answer.is_empty() {
            return Err(interrogate_core::Error::Empty("answer").into());
        }
        let reconstructions = self.reconstruct_queries(answer, spec, base_seed)?;
        let (sims, score) = self.score(query, &reconstructions)?;
        Ok(DetectionOutcome {
            schema_version: OUTCOME_SCHEMA_VERSION,
            query: query.to_string(),
            answer: answer.to_string(),
            base_seed,
            reconstructions,
            per_reconstruction_similarity: sims,
            verdict: score < self.config.tau,
            score,
            config: self.config.clone(),
        })
    }
}
