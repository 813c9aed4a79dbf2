//! Runs every dataset record through forward generation, ground-truth
//! verification and each detection method.
//!
//! Items are processed in parallel but records are emitted in dataset order,
//! so a rerun against the same cache writes byte-identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use interrogate_core::{PromptSpec, TaskKind, TaskTemplate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{embed_cosine, selfcheck, SelfCheckConfig, SelfCheckOutcome};
use super::dataset::DatasetRecord;
use crate::backend::Registry;
use crate::detector::{DetectionOutcome, Detector, DetectorConfig};
use crate::error::{Error, Result};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Interrogate,
    EmbedCosine,
    Selfcheck,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Interrogate, Method::EmbedCosine, Method::Selfcheck];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Interrogate => "interrogate",
            Method::EmbedCosine => "embed-cosine",
            Method::Selfcheck => "selfcheck",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "interrogate" | "interrogatellm" => Ok(Method::Interrogate),
            "embed-cosine" | "cosine" => Ok(Method::EmbedCosine),
            "selfcheck" | "selfcheckgpt" => Ok(Method::Selfcheck),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected interrogate, embed-cosine or selfcheck)"
            ))),
        }
    }
}

/// Method name used in records for a K-sweep point.
pub fn k_sweep_name(k: usize) -> String {
    format!("interrogate@k={k}")
}

/// Parses a K-sweep method name back to its `k`.
pub fn parse_k_sweep_name(name: &str) -> Option<usize> {
    name.strip_prefix("interrogate@k=")?.parse().ok()
}

/// One task's records together with how to prompt for them.
#[derive(Debug, Clone)]
pub struct TaskInput {
    pub kind: TaskKind,
    pub template: TaskTemplate,
    pub prompt: PromptSpec,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub tasks: Vec<TaskInput>,
    pub forward_backends: Vec<String>,
    pub methods: Vec<Method>,
    pub detector: DetectorConfig,
    /// Extra `k` values; each adds an `interrogate@k=..` method.
    pub k_sweep: Vec<usize>,
    pub embed_cosine_threshold: f64,
    pub selfcheck: SelfCheckConfig,
    pub seed: u64,
    /// Caps the records taken from each task.
    pub limit: Option<usize>,
}

/// Per-method details kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDetails {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interrogate: Option<DetectionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_cosine_similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selfcheck: Option<SelfCheckOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema_version: u32,
    pub forward_backend: String,
    pub record: DatasetRecord,
    pub query: String,
    pub item_seed: u64,
    /// Absent when the forward pass failed.
    pub generated_answer: Option<String>,
    /// true = hallucination
    pub ground_truth_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    /// Hallucination-oriented: higher means more likely hallucinated.
    pub method_scores: BTreeMap<String, f64>,
    pub method_verdicts: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub method_errors: BTreeMap<String, String>,
    pub details: MethodDetails,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub records: Vec<EvalRecord>,
    /// Items planned, including any skipped after a stop request.
    pub planned: usize,
    pub interrupted: bool,
}

/// Per-item seed, independent of processing order.
pub fn item_seed(base: u64, task: TaskKind, forward: &str, id: &str) -> u64 {
    crate::backend::derive_seed(base, &format!("item/{task}/{forward}/{id}"), 0)
}

struct Job<'a> {
    task: &'a TaskInput,
    record: &'a DatasetRecord,
    forward: String,
}

pub fn run(plan: &EvalPlan, registry: &Registry, stop: &AtomicBool) -> Result<EvalRun> {
    if plan.methods.is_empty() && plan.k_sweep.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    if plan.forward_backends.is_empty() {
        return Err(Error::Config("no forward backends selected".into()));
    }
    let detector = Detector::from_registry(plan.detector.clone(), registry)?;
    let sweep: Vec<(usize, Detector)> = plan
        .k_sweep
        .iter()
        .map(|&k| Ok((k, detector.with_k(k)?)))
        .collect::<Result<_>>()?;
    let embedder = registry.embedder(&plan.detector.embedding_backend)?;
    let mut forwards = BTreeMap::new();
    for id in &plan.forward_backends {
        forwards.insert(id.clone(), registry.generator(id)?);
    }
    let judge_override = plan.selfcheck.judge.as_deref().map(|id| registry.generator(id)).transpose()?;

    let mut jobs = Vec::new();
    for task in &plan.tasks {
        let take = plan.limit.unwrap_or(usize::MAX);
        for forward in &plan.forward_backends {
            for record in task.records.iter().take(take) {
                jobs.push(Job { task, record, forward: forward.clone() });
            }
        }
    }
    let planned = jobs.len();
    let results: Vec<Option<Result<EvalRecord>>> = jobs
        .par_iter()
        .map(|job| {
            if stop.load(Ordering::SeqCst) {
                return None;
            }
            let forward = forwards[&job.forward].clone();
            let judge = judge_override.clone().unwrap_or_else(|| forward.clone());
            Some(evaluate_item(plan, job, &detector, &sweep, &*forward, &*judge, &*embedder))
        })
        .collect();
    let interrupted = results.iter().any(Option::is_none);
    let mut records = Vec::with_capacity(results.len());
    for r in results.into_iter().flatten() {
        records.push(r?);
    }
    Ok(EvalRun { records, planned, interrupted })
}

fn evaluate_item(
    plan: &EvalPlan,
    job: &Job<'_>,
    detector: &Detector,
    sweep: &[(usize, Detector)],
    forward: &dyn crate::backend::GenerationBackend,
    judge: &dyn crate::backend::GenerationBackend,
    embedder: &dyn crate::backend::EmbeddingBackend,
) -> Result<EvalRecord> {
    let query = job.record.query(&job.task.template)?;
    let seed = item_seed(plan.seed, job.task.kind, &job.forward, &job.record.id);
    log::debug!("{} via {}: seed {seed}", job.record.id, job.forward);
    let mut out = EvalRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        forward_backend: job.forward.clone(),
        record: job.record.clone(),
        query: query.clone(),
        item_seed: seed,
        generated_answer: None,
        ground_truth_label: None,
        iou: None,
        method_scores: BTreeMap::new(),
        method_verdicts: BTreeMap::new(),
        method_errors: BTreeMap::new(),
        details: MethodDetails { interrogate: None, embed_cosine_similarity: None, selfcheck: None },
        error: None,
    };
    let answer = match detector.forward_answer(&query, &job.task.prompt, forward, seed) {
        Ok(a) => a,
        Err(e) => {
            out.error = Some(format!("forward pass failed: {e}"));
            return Ok(out);
        }
    };
    let verification = job.record.verify(&answer)?;
    out.generated_answer = Some(answer.clone());
    out.ground_truth_label = Some(verification.hallucination);
    out.iou = verification.iou;

    let put = |out: &mut EvalRecord, name: String, result: Result<(f64, bool)>| match result {
        Ok((score, verdict)) => {
            out.method_scores.insert(name.clone(), score);
            out.method_verdicts.insert(name, verdict);
        }
        Err(e) => {
            out.method_errors.insert(name, e.to_string());
        }
    };
    for method in &plan.methods {
        match method {
            Method::Interrogate => {
                let r = detector.detect_given_answer(&query, &answer, &job.task.prompt, seed);
                let scored = r.as_ref().map(|o| (1.0 - o.score, o.verdict)).map_err(clone_err);
                out.details.interrogate = r.ok();
                put(&mut out, method.to_string(), scored);
            }
            Method::EmbedCosine => {
                let r = embed_cosine(&query, &answer, embedder, plan.embed_cosine_threshold);
                if let Ok((sim, _)) = &r {
                    out.details.embed_cosine_similarity = Some(*sim);
                }
                put(&mut out, method.to_string(), r.map(|(s, v)| (1.0 - s, v)));
            }
            Method::Selfcheck => {
                let r = selfcheck(&query, &answer, &job.task.prompt, forward, judge, &plan.selfcheck, seed);
                let scored = r.as_ref().map(|o| (o.score, o.verdict)).map_err(clone_err);
                out.details.selfcheck = r.ok();
                put(&mut out, method.to_string(), scored);
            }
        }
    }
    for (k, d) in sweep {
        let r = d
            .detect_given_answer(&query, &answer, &job.task.prompt, seed)
            .map(|o| (1.0 - o.score, o.verdict));
        put(&mut out, k_sweep_name(*k), r);
    }
    Ok(out)
}

fn clone_err(e: &Error) -> Error {
    Error::DetectionInfeasible(e.to_string())
}

/// Writes one JSON object per line, in the given order.
pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("embed_cosine".parse::<Method>().unwrap(), Method::EmbedCosine);
        assert!("bogus".parse::<Method>().is_err());
        assert_eq!(parse_k_sweep_name(&k_sweep_name(3)), Some(3));
        assert_eq!(parse_k_sweep_name("interrogate"), None);
    }

    #[test]
    fn item_seeds_are_distinct() {
        let a = item_seed(1, TaskKind::Movies, "f", "a");
        assert_ne!(a, item_seed(1, TaskKind::Movies, "f", "b"));
        assert_ne!(a, item_seed(1, TaskKind::Books, "f", "a"));
        assert_ne!(a, item_seed(2, TaskKind::Movies, "f", "a"));
    }
}
