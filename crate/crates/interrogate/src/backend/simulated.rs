//! Deterministic offline backends.
//!
//! [`SimulatedGenerator`] answers forward prompts from a fact table and
//! backward prompts from an inverse table, sampling among weighted candidates
//! with a temperature-scaled softmax. It also plays the yes/no judge for the
//! sampling-consistency baseline. [`SimulatedEmbedder`] wraps the hashed
//! character n-gram embedder.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use interrogate_core::ngram::fnv1a64;
use interrogate_core::verify::normalize;
use interrogate_core::{softmax_sample, EmbeddingVector, NgramEmbedder, TaskKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{finish_completion, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::error::{BackendError, Error, Result};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

const JUDGE_MARKER: &str = "Is the sentence supported by the context above?";
const UNKNOWN_ANSWER: &str = "I am not sure.";
const UNKNOWN_QUERY: &str = "What is this about?";

/// How an item's forward answer relates to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationMode {
    /// Correct answer that maps back to its own query.
    None,
    /// Wrong answer that maps back to a different query.
    Fabricate,
    /// Wrong answer that nonetheless maps back to the original query.
    SymmetricHallucinate,
    /// Correct answer shared by several queries.
    ManyToOne,
}

impl HallucinationMode {
    pub const ALL: [HallucinationMode; 4] = [
        HallucinationMode::None,
        HallucinationMode::Fabricate,
        HallucinationMode::SymmetricHallucinate,
        HallucinationMode::ManyToOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HallucinationMode::None => "none",
            HallucinationMode::Fabricate => "fabricate",
            HallucinationMode::SymmetricHallucinate => "symmetric_hallucinate",
            HallucinationMode::ManyToOne => "many_to_one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub logit: f64,
}

impl Candidate {
    pub fn new(text: impl Into<String>, logit: f64) -> Self {
        Self {
            text: text.into(),
            logit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldItem {
    pub id: String,
    pub task: TaskKind,
    pub mode: HallucinationMode,
    pub query: String,
}

/// Fact and inverse tables plus per-item modes.
///
/// Keys are stored normalized (lowercased, whitespace collapsed), so lookups
/// tolerate the spacing differences prompt rendering introduces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorld {
    pub schema_version: u32,
    /// query -> weighted answers
    pub facts: BTreeMap<String, Vec<Candidate>>,
    /// answer -> weighted queries
    pub inverse: BTreeMap<String, Vec<Candidate>>,
    pub items: Vec<WorldItem>,
}

pub fn world_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl SimulatedWorld {
    pub fn new() -> Self {
        Self {
            schema_version: WORLD_SCHEMA_VERSION,
            ..Self::default()
        }
    }

    pub fn add_fact(&mut self, query: &str, answers: Vec<Candidate>) {
        self.facts.insert(world_key(query), answers);
    }

    pub fn add_inverse(&mut self, answer: &str, queries: Vec<Candidate>) {
        self.inverse.insert(world_key(answer), queries);
    }

    pub fn facts_for(&self, query: &str) -> Option<&[Candidate]> {
        self.facts.get(&world_key(query)).map(Vec::as_slice)
    }

    pub fn inverse_for(&self, answer: &str) -> Option<&[Candidate]> {
        self.inverse.get(&world_key(answer)).map(Vec::as_slice)
    }

    pub fn mode_of(&self, id: &str) -> Option<HallucinationMode> {
        self.items.iter().find(|i| i.id == id).map(|i| i.mode)
    }

    /// Checks candidate lists are usable and that every mode-`None` item's
    /// most likely answer maps straight back to its query.
    pub fn validate(&self) -> Result<()> {
        for (key, cands) in self.facts.iter().chain(&self.inverse) {
            if cands.is_empty() || cands.iter().any(|c| !c.logit.is_finite() || c.text.trim().is_empty()) {
                return Err(Error::Config(format!("world entry `{key}` has no usable candidates")));
            }
        }
        for item in self.items.iter().filter(|i| i.mode == HallucinationMode::None) {
            let consistent = self
                .facts_for(&item.query)
                .and_then(|a| self.inverse_for(&argmax(a).text))
                .is_some_and(|q| world_key(&argmax(q).text) == world_key(&item.query));
            if !consistent {
                return Err(Error::Config(format!(
                    "item `{}` is mode none but its tables do not round-trip",
                    item.id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let world: SimulatedWorld = serde_json::from_str(&text)?;
        if world.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported world schema version {}",
                path.display(),
                world.schema_version
            )));
        }
        world.validate()?;
        Ok(world)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

fn argmax(cands: &[Candidate]) -> &Candidate {
    cands
        .iter()
        .reduce(|best, c| if c.logit > best.logit { c } else { best })
        .expect("candidate lists are non-empty")
}

#[derive(Debug, PartialEq)]
enum PromptKind<'a> {
    Forward(&'a str),
    Backward(&'a str),
    Judge { context: &'a str, sentence: &'a str },
    Unknown,
}

/// Generation backend backed by a [`SimulatedWorld`].
pub struct SimulatedGenerator {
    id: String,
    world: std::sync::Arc<SimulatedWorld>,
    query_label: String,
    answer_label: String,
    default_temperature: f64,
    calls: AtomicU64,
    request_log: Mutex<HashMap<u64, u32>>,
}

impl SimulatedGenerator {
    pub fn new(id: impl Into<String>, world: std::sync::Arc<SimulatedWorld>) -> Self {
        Self {
            id: id.into(),
            world,
            query_label: "Query:".into(),
            answer_label: "Answer:".into(),
            default_temperature: 0.6,
            calls: AtomicU64::new(0),
            request_log: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_labels(mut self, query_label: &str, answer_label: &str) -> Self {
        self.query_label = query_label.trim().to_string();
        self.answer_label = answer_label.trim().to_string();
        self
    }

    pub fn with_default_temperature(mut self, t: f64) -> Self {
        self.default_temperature = t;
        self
    }

    pub fn world(&self) -> &SimulatedWorld {
        &self.world
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Calls that repeated an earlier request exactly.
    pub fn duplicate_calls(&self) -> u64 {
        let log = self.request_log.lock().unwrap_or_else(|e| e.into_inner());
        log.values().map(|n| u64::from(n.saturating_sub(1))).sum()
    }

    fn record(&self, req: &GenerationRequest) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(req.prompt.as_bytes());
        bytes.extend_from_slice(&req.temperature.to_bits().to_le_bytes());
        bytes.extend_from_slice(&req.seed.map_or([0xff; 8], u64::to_le_bytes));
        bytes.extend_from_slice(&req.max_tokens.to_le_bytes());
        for s in &req.stop {
            bytes.extend_from_slice(s.as_bytes());
            bytes.push(0);
        }
        let mut log = self.request_log.lock().unwrap_or_else(|e| e.into_inner());
        *log.entry(fnv1a64(&bytes)).or_default() += 1;
    }

    fn classify<'a>(&self, prompt: &'a str) -> PromptKind<'a> {
        if prompt.contains(JUDGE_MARKER) {
            let context = between(prompt, "Context:", "\n\nSentence:");
            let sentence = between(prompt, "\n\nSentence:", JUDGE_MARKER);
            return match (context, sentence) {
                (Some(context), Some(sentence)) => PromptKind::Judge {
                    context: context.trim(),
                    sentence: sentence.trim(),
                },
                _ => PromptKind::Unknown,
            };
        }
        let body = prompt.trim_end();
        if let Some(head) = body.strip_suffix(self.answer_label.as_str()) {
            if let Some(pos) = head.rfind(self.query_label.as_str()) {
                return PromptKind::Forward(head[pos + self.query_label.len()..].trim());
            }
        }
        if let Some(head) = body.strip_suffix(self.query_label.as_str()) {
            if let Some(pos) = head.rfind(self.answer_label.as_str()) {
                return PromptKind::Backward(head[pos + self.answer_label.len()..].trim());
            }
        }
        PromptKind::Unknown
    }

    fn pick(&self, cands: &[Candidate], req: &GenerationRequest) -> Result<String, BackendError> {
        let Some(seed) = req.seed else {
            return Ok(argmax(cands).text.clone());
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(self.id.as_bytes()));
        let logits: Vec<f64> = cands.iter().map(|c| c.logit).collect();
        let idx = softmax_sample(&logits, req.temperature, &mut rng)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(cands[idx].text.clone())
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = from + text[from..].find(end)?;
    Some(&text[from..to])
}

fn truncate_tokens(text: &str, max_tokens: u32) -> &str {
    let mut seen = 0u32;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            if seen == max_tokens {
                return &text[..i];
            }
            seen += 1;
            in_token = true;
        }
    }
    text
}

impl GenerationBackend for SimulatedGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn default_temperature(&self) -> f64 {
        self.default_temperature
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        req.validate()?;
        self.record(req);
        let raw = match self.classify(&req.prompt) {
            PromptKind::Forward(query) => match self.world.facts_for(query) {
                Some(c) => self.pick(c, req)?,
                None => UNKNOWN_ANSWER.to_string(),
            },
            PromptKind::Backward(answer) => match self.world.inverse_for(answer) {
                Some(c) => self.pick(c, req)?,
                None => UNKNOWN_QUERY.to_string(),
            },
            PromptKind::Judge { context, sentence } => {
                let supported = normalize(context).contains(normalize(sentence).as_str());
                if supported { "Yes" } else { "No" }.to_string()
            }
            PromptKind::Unknown => UNKNOWN_ANSWER.to_string(),
        };
        finish_completion(&self.id, truncate_tokens(&raw, req.max_tokens), &req.stop)
    }
}

/// Embedding backend over [`NgramEmbedder`] (trigrams, D = 256 by default).
pub struct SimulatedEmbedder {
    id: String,
    embedder: NgramEmbedder,
    calls: AtomicU64,
    texts: Mutex<HashMap<String, u32>>,
}

impl SimulatedEmbedder {
    pub fn new(id: impl Into<String>, embedder: NgramEmbedder) -> Self {
        Self {
            id: id.into(),
            embedder,
            calls: AtomicU64::new(0),
            texts: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Calls beyond the first for each distinct text.
    pub fn duplicate_calls(&self) -> u64 {
        let texts = self.texts.lock().unwrap_or_else(|e| e.into_inner());
        texts.values().map(|n| u64::from(n.saturating_sub(1))).sum()
    }
}

impl EmbeddingBackend for SimulatedEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn cache_identity(&self) -> String {
        format!("{}#ngram{}x{}", self.id, self.embedder.n(), self.embedder.dimension())
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.embedder.dimension())
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .texts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(text.to_string())
            .or_default() += 1;
        self.embedder
            .embed(text)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))
    }
}
