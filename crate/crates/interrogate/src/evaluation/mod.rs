//! Labelled datasets, baselines, the evaluation harness and metric reports.

pub mod dataset;
pub mod baselines;
pub mod harness;
pub mod report;
