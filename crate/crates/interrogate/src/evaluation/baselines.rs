//! Comparison methods and threshold calibration.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use interrogate_core::selfcheck::{inconsistency_score, judge_prompt, parse_yes_no, split_sentences};
use interrogate_core::{calibrate_threshold, cosine_similarity, PromptSpec, Threshold};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{derive_seed, EmbeddingBackend, GenerationBackend, GenerationRequest};
use crate::error::{Error, Result};

/// Direct query/answer embedding similarity; flags a hallucination when the
/// cosine falls below `threshold`.
pub fn embed_cosine(
    query: &str,
    answer: &str,
    embedder: &dyn EmbeddingBackend,
    threshold: f64,
) -> Result<(f64, bool)> {
    let q = embedder.embed(query)?;
    let a = embedder.embed(answer)?;
    let sim = cosine_similarity(&q, &a)?;
    Ok((sim, sim < threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckConfig {
    pub samples: usize,
    /// Inconsistency above this flags a hallucination.
    pub threshold: f64,
    /// Judge backend; the forward backend when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        Self { samples: 4, threshold: 0.5, judge: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckOutcome {
    pub samples: Vec<String>,
    pub sentences: Vec<String>,
    /// `judgments[sentence][sample]`
    pub judgments: Vec<Vec<Option<bool>>>,
    pub score: f64,
    pub verdict: bool,
}

/// Sampling-consistency check: draws extra answers from `forward` and asks
/// `judge` whether each sentence of `answer` is supported by each of them.
pub fn selfcheck(
    query: &str,
    answer: &str,
    spec: &PromptSpec,
    forward: &dyn GenerationBackend,
    judge: &dyn GenerationBackend,
    config: &SelfCheckConfig,
    base_seed: u64,
) -> Result<SelfCheckOutcome> {
    if config.samples == 0 {
        return Err(Error::Config("selfcheck needs at least one sample".into()));
    }
    let prompt = spec.render_forward(query)?;
    let stops = [spec.query_label.trim().to_string(), spec.answer_label.trim().to_string()];
    let label = format!("selfcheck/{}", forward.id());
    let samples = (0..config.samples)
        .map(|i| {
            let req = GenerationRequest::new(
                prompt.clone(),
                forward.default_temperature(),
                crate::backend::DEFAULT_FORWARD_MAX_TOKENS,
            )
            .with_seed(derive_seed(base_seed, &label, i))
            .with_stop(stops.clone());
            // a failed sample supports nothing
            match forward.generate(&req) {
                Ok(raw) => spec.truncate_completion(&raw).to_string(),
                Err(e) => {
                    log::debug!("selfcheck sample {i} failed: {e}");
                    String::new()
                }
            }
        })
        .collect::<Vec<_>>();
    let sentences: Vec<String> = split_sentences(answer).into_iter().map(String::from).collect();
    if sentences.is_empty() {
        return Err(interrogate_core::Error::Empty("answer").into());
    }
    let mut judgments = Vec::with_capacity(sentences.len());
    let judge_label = format!("judge/{}", judge.id());
    for (s, sentence) in sentences.iter().enumerate() {
        let row = samples
            .iter()
            .enumerate()
            .map(|(j, sample)| {
                if sample.is_empty() {
                    return None;
                }
                let req = GenerationRequest::new(judge_prompt(sample, sentence), judge.default_temperature(), 4)
                    .with_seed(derive_seed(base_seed, &judge_label, s * samples.len() + j));
                judge.generate(&req).ok().and_then(|r| parse_yes_no(&r))
            })
            .collect();
        judgments.push(row);
    }
    let score = inconsistency_score(&judgments)?;
    Ok(SelfCheckOutcome {
        samples,
        sentences,
        judgments,
        score,
        verdict: score > config.threshold,
    })
}

/// A labelled question pair for threshold calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub question1: String,
    pub question2: String,
    pub is_duplicate: bool,
}

/// Reads `{question1, question2, is_duplicate}` lines; `is_duplicate` may be
/// a boolean or 0/1.
pub fn load_pairs(path: &Path) -> Result<Vec<CalibrationPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Dataset { path: path.to_path_buf(), line: idx + 1, message };
        let v: BTreeMap<String, Value> = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let text = |k: &str| match v.get(k) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            _ => Err(bad(format!("`{k}` must be a non-empty string"))),
        };
        let is_duplicate = match v.get("is_duplicate") {
            Some(Value::Bool(b)) => *b,
            Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
            Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
            _ => return Err(bad("`is_duplicate` must be a boolean or 0/1".into())),
        };
        pairs.push(CalibrationPair { question1: text("question1")?, question2: text("question2")?, is_duplicate });
    }
    Ok(pairs)
}

/// Embeds each pair and picks the threshold that best separates duplicates.
pub fn calibrate(pairs: &[CalibrationPair], embedder: &dyn EmbeddingBackend) -> Result<Threshold> {
    let (mut similar, mut dissimilar) = (Vec::new(), Vec::new());
    for p in pairs {
        let sim = cosine_similarity(&embedder.embed(&p.question1)?, &embedder.embed(&p.question2)?)?;
        if p.is_duplicate {
            similar.push(sim);
        } else {
            dissimilar.push(sim);
        }
    }
    Ok(calibrate_threshold(&similar, &dissimilar)?)
}
