//! Hallucination detection by query reconstruction: model backends, a
//! content-addressed response cache, the detector, the evaluation harness and
//! the `interrogate` command line.

pub mod backend;
pub mod cache;
pub mod config;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod synthetic;

pub use detector::{DetectionOutcome, Detector, DetectorConfig, Reconstruction};
pub use error::{BackendError, Error, Result};
