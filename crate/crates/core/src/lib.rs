//! Numeric and text primitives for detecting hallucinated answers by
//! reconstructing the original query from the answer.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): cosine
//! scoring, temperature schedules, softmax sampling, few-shot prompt
//! rendering, ground-truth verifiers and the detection metrics. IO, backends
//! and the command line live in the `interrogate` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod metrics;
pub mod ngram;
pub mod prompting;
pub mod sampling;
pub mod schedule;
pub mod selfcheck;
pub mod similarity;
pub mod verify;

pub use error::{Error, Result};
pub use metrics::{
    balanced_accuracy, calibrate_threshold, hallucination_rate, roc_auc, Confusion, Threshold,
};
pub use ngram::NgramEmbedder;
pub use prompting::{FewShotExemplar, PromptSpec, TaskKind, TaskTemplate};
pub use sampling::{softmax_probabilities, softmax_sample};
pub use schedule::{temperature_schedule, TemperatureSchedule};
pub use similarity::{
    aggregate_similarities, cosine_similarity, score_reconstructions, AggregationMode,
    EmbeddingVector,
};
