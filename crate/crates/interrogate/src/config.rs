//! TOML run configuration, prompt files and backend construction.
//!
//! Relative paths in a config file resolve against the file's directory.
//! Command-line flags override the file, which overrides built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use interrogate_core::{AggregationMode, FewShotExemplar, NgramEmbedder, PromptSpec, TaskKind, TaskTemplate};
use serde::{Deserialize, Serialize};

use crate::backend::http::{Endpoint, HttpBackend, HttpConfig};
use crate::backend::simulated::{SimulatedEmbedder, SimulatedGenerator, SimulatedWorld};
use crate::backend::Registry;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::evaluation::baselines::{calibrate, load_pairs, SelfCheckConfig};
use crate::evaluation::dataset::load_dataset;
use crate::evaluation::harness::{Method, TaskInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// OpenAI-compatible `/v1/completions` (+ `/v1/embeddings`).
    HttpCompletions,
    /// OpenAI-compatible `/v1/chat/completions` (+ `/v1/embeddings`).
    HttpChat,
    /// Offline generator over a simulated-world file.
    Simulated,
    /// Offline hashed character n-gram embedder.
    Ngram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub embedding_model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub default_temperature: Option<f64>,
    pub max_in_flight: Option<usize>,
    pub retry_budget: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub dimension: Option<usize>,
    /// Simulated-world file for `simulated` backends.
    pub world: Option<PathBuf>,
    /// n-gram size for `ngram` backends.
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub aggregation: AggregationMode,
    #[serde(default = "default_true")]
    pub variable_temperature: bool,
    pub backward: Vec<String>,
    pub embedding: String,
}

fn default_k() -> usize {
    5
}
fn default_tau() -> f64 {
    0.91
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    /// When unset: calibrated on `calibration_pairs` if given, else the
    /// detector's `tau`.
    pub embed_cosine_threshold: Option<f64>,
    pub calibration_pairs: Option<PathBuf>,
    pub selfcheck_samples: Option<usize>,
    pub selfcheck_threshold: Option<f64>,
    pub judge: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub task: TaskKind,
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Prompt file; built-in prompts when unset.
    pub prompts: Option<PathBuf>,
    pub forward: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub k_sweep: Vec<usize>,
    pub detector: DetectorSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub tasks: Vec<TaskSection>,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.cache_dir, &mut cfg.output_dir, &mut cfg.prompts].into_iter().flatten() {
            resolve(base, p);
        }
        if let Some(p) = &mut cfg.baselines.calibration_pairs {
            resolve(base, p);
        }
        for b in &mut cfg.backends {
            if let Some(w) = &mut b.world {
                resolve(base, w);
            }
        }
        for t in &mut cfg.tasks {
            resolve(base, &mut t.dataset);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks that every referenced backend id exists with a fitting kind.
    pub fn validate(&self) -> Result<()> {
        let mut kinds = BTreeMap::new();
        for b in &self.backends {
            if kinds.insert(b.id.as_str(), b.kind).is_some() {
                return Err(Error::Config(format!("duplicate backend id `{}`", b.id)));
            }
        }
        let generator = |id: &str, role: &str| match kinds.get(id) {
            Some(BackendKind::Ngram) => Err(Error::Config(format!("{role} `{id}` is an embedder"))),
            Some(_) => Ok(()),
            None => Err(Error::Config(format!("{role} `{id}` is not a configured backend"))),
        };
        for id in &self.forward {
            generator(id, "forward backend")?;
        }
        for id in &self.detector.backward {
            generator(id, "backward backend")?;
        }
        if let Some(j) = &self.baselines.judge {
            generator(j, "judge backend")?;
        }
        match kinds.get(self.detector.embedding.as_str()) {
            Some(BackendKind::Simulated) => {
                return Err(Error::Config(format!("`{}` cannot embed", self.detector.embedding)))
            }
            Some(_) => {}
            None => {
                return Err(Error::Config(format!(
                    "embedding backend `{}` is not a configured backend",
                    self.detector.embedding
                )))
            }
        }
        self.detector_config().validate()
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let d = &self.detector;
        DetectorConfig {
            k: d.k,
            tau: d.tau,
            aggregation: d.aggregation,
            variable_temperature: d.variable_temperature,
            backward_backends: d.backward.clone(),
            embedding_backend: d.embedding.clone(),
        }
    }

    pub fn selfcheck_config(&self) -> SelfCheckConfig {
        let d = SelfCheckConfig::default();
        SelfCheckConfig {
            samples: self.baselines.selfcheck_samples.unwrap_or(d.samples),
            threshold: self.baselines.selfcheck_threshold.unwrap_or(d.threshold),
            judge: self.baselines.judge.clone(),
        }
    }

    pub fn embed_cosine_threshold(&self, registry: &Registry) -> Result<f64> {
        if let Some(t) = self.baselines.embed_cosine_threshold {
            return Ok(t);
        }
        match &self.baselines.calibration_pairs {
            Some(path) => {
                let t = calibrate(&load_pairs(path)?, &*registry.embedder(&self.detector.embedding)?)?;
                log::info!("embed-cosine threshold {} calibrated on {}", t.value, path.display());
                Ok(t.value)
            }
            None => Ok(self.detector.tau),
        }
    }

    pub fn prompt_file(&self) -> Result<PromptFile> {
        match &self.prompts {
            Some(p) => PromptFile::load(p),
            None => Ok(PromptFile::builtin()),
        }
    }

    /// Builds every configured backend. API keys come from the environment
    /// variables named in the config, never from the file itself.
    pub fn build_registry(&self, prompts: &PromptFile) -> Result<Registry> {
        let mut registry = Registry::new();
        let mut worlds: BTreeMap<PathBuf, Arc<SimulatedWorld>> = BTreeMap::new();
        for b in &self.backends {
            match b.kind {
                BackendKind::Simulated => {
                    let path = b
                        .world
                        .clone()
                        .ok_or_else(|| Error::Config(format!("backend `{}` needs `world`", b.id)))?;
                    let world = match worlds.get(&path) {
                        Some(w) => w.clone(),
                        None => {
                            let w = Arc::new(SimulatedWorld::load(&path)?);
                            worlds.insert(path, w.clone());
                            w
                        }
                    };
                    let mut g = SimulatedGenerator::new(&b.id, world)
                        .with_labels(&prompts.query_label, &prompts.answer_label);
                    if let Some(t) = b.default_temperature {
                        g = g.with_default_temperature(t);
                    }
                    registry.add_generator(Arc::new(g));
                }
                BackendKind::Ngram => {
                    let d = NgramEmbedder::default();
                    let e = NgramEmbedder::new(b.n.unwrap_or(d.n()), b.dimension.unwrap_or(d.dimension()))?;
                    registry.add_embedder(Arc::new(SimulatedEmbedder::new(&b.id, e)));
                }
                BackendKind::HttpCompletions | BackendKind::HttpChat => {
                    let endpoint =
                        if b.kind == BackendKind::HttpChat { Endpoint::Chat } else { Endpoint::Completions };
                    let need = |v: &Option<String>, name: &str| {
                        v.clone().ok_or_else(|| Error::Config(format!("backend `{}` needs `{name}`", b.id)))
                    };
                    let mut cfg = HttpConfig::new(&b.id, endpoint, &need(&b.base_url, "base_url")?, &need(&b.model_name, "model_name")?);
                    if let Some(var) = &b.api_key_env {
                        cfg = cfg.api_key_from_env(var)?;
                    }
                    if let Some(t) = b.default_temperature {
                        cfg.default_temperature = t;
                    }
                    if let Some(n) = b.max_in_flight {
                        cfg.max_in_flight = n;
                    }
                    if let Some(n) = b.retry_budget {
                        cfg.retry_budget = n;
                    }
                    if let Some(s) = b.timeout_secs {
                        cfg.timeout = Duration::from_secs(s);
                    }
                    cfg.embedding_model = b.embedding_model.clone();
                    cfg.dimension = b.dimension;
                    let backend = Arc::new(HttpBackend::new(cfg)?);
                    registry.add_generator(backend.clone());
                    registry.add_embedder(backend);
                }
            }
        }
        Ok(registry)
    }

    /// Loads the datasets of the selected tasks (all when `only` is empty).
    pub fn task_inputs(&self, prompts: &PromptFile, only: &[TaskKind]) -> Result<Vec<TaskInput>> {
        self.tasks
            .iter()
            .filter(|t| only.is_empty() || only.contains(&t.task))
            .map(|t| {
                let (template, prompt) = prompts.for_task(t.task)?;
                Ok(TaskInput { kind: t.task, template, prompt, records: load_dataset(&t.dataset)? })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExemplarConfig {
    pub query: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskPrompt {
    /// Defaults to the built-in pattern for the task.
    pub query_pattern: Option<String>,
    pub exemplars: Vec<ExemplarConfig>,
}

/// Labels shared by every task plus per-task patterns and exemplars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptFile {
    #[serde(default = "default_query_label")]
    pub query_label: String,
    #[serde(default = "default_answer_label")]
    pub answer_label: String,
    pub tasks: BTreeMap<TaskKind, TaskPrompt>,
}

fn default_query_label() -> String {
    "Query:".into()
}
fn default_answer_label() -> String {
    "Answer:".into()
}

fn ex(query: &str, answer: &str) -> ExemplarConfig {
    ExemplarConfig { query: query.into(), answer: answer.into() }
}

impl PromptFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for kind in file.tasks.keys() {
            file.for_task(*kind)?;
        }
        Ok(file)
    }

    pub fn builtin() -> Self {
        let tasks = [
            (
                TaskKind::Movies,
                vec![
                    ex(
                        "What actors played in the 1995 movie Jumanji?",
                        "The main cast included Robin Williams, Kirsten Dunst, Bonnie Hunt, and Bradley Pierce.",
                    ),
                    ex(
                        "What actors played in the 1999 movie The Matrix?",
                        "The main cast included Keanu Reeves, Laurence Fishburne, Carrie-Anne Moss, and Hugo Weaving.",
                    ),
                ],
            ),
            (
                TaskKind::Books,
                vec![
                    ex(
                        "Who is the author of the book Decision in Normandy, what year was it published?",
                        "The author is Carlo D'Este, and it was published in 1991.",
                    ),
                    ex(
                        "Who is the author of the book Pride and Prejudice, what year was it published?",
                        "The author is Jane Austen, and it was published in 1813.",
                    ),
                ],
            ),
            (
                TaskKind::Gci,
                vec![
                    ex("What is the capital of France?", "The capital is Paris."),
                    ex("What is the capital of Japan?", "The capital is Tokyo."),
                ],
            ),
        ];
        Self {
            query_label: default_query_label(),
            answer_label: default_answer_label(),
            tasks: tasks
                .into_iter()
                .map(|(k, exemplars)| (k, TaskPrompt { query_pattern: None, exemplars }))
                .collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn for_task(&self, kind: TaskKind) -> Result<(TaskTemplate, PromptSpec)> {
        let task = self
            .tasks
            .get(&kind)
            .ok_or_else(|| Error::Config(format!("no prompt for task `{kind}`")))?;
        let template = match &task.query_pattern {
            Some(p) => TaskTemplate::new(kind, p.clone())?,
            None => TaskTemplate::builtin(kind)
                .ok_or_else(|| Error::Config(format!("task `{kind}` needs a query_pattern")))?,
        };
        template.placeholders()?;
        let exemplars = task
            .exemplars
            .iter()
            .map(|e| FewShotExemplar::new(&e.query, &e.answer))
            .collect::<interrogate_core::Result<Vec<_>>>()?;
        let spec = PromptSpec::new(exemplars)?.with_labels(&self.query_label, &self.answer_label)?;
        Ok((template, spec))
    }
}
