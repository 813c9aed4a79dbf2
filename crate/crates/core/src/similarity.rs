//! Cosine scoring and aggregation of reconstruction similarities.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// A dense embedding of one piece of text.
///
/// Construction rejects empty and non-finite vectors, so every value of this
/// type has `D >= 1` finite entries.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector"));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// `(u . v) / (|u| |v|)`.
///
/// Zero-norm inputs are an error rather than a similarity of zero: an all-zero
/// embedding means the embedding backend misbehaved.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(Error::DimensionMismatch {
            left: u.dimension(),
            right: v.dimension(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.0.iter().zip(&v.0) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    // sqrt(uu * vv) rather than sqrt(uu) * sqrt(vv): identical inputs give exactly 1
    let c = dot / libm::sqrt(uu * vv);
    // rounding can push |c| a hair past 1
    Ok(c.clamp(-1.0, 1.0))
}

/// How per-reconstruction similarities collapse into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AggregationMode {
    #[default]
    Average,
    Maximum,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Average => "average",
            AggregationMode::Maximum => "maximum",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "average" | "avg" | "mean" => Ok(AggregationMode::Average),
            "maximum" | "max" => Ok(AggregationMode::Maximum),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown aggregation mode `{other}`"
            ))),
        }
    }
}

pub fn aggregate_similarities(sims: &[f64], mode: AggregationMode) -> Result<f64> {
    if sims.is_empty() {
        return Err(Error::Empty("similarity list"));
    }
    if sims.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("similarity list"));
    }
    Ok(match mode {
        AggregationMode::Average => {
            let mean = sims.iter().sum::<f64>() / sims.len() as f64;
            // keep the mean inside [min, max] despite summation rounding
            let (lo, hi) = min_max(sims);
            mean.clamp(lo, hi)
        }
        AggregationMode::Maximum => min_max(sims).1,
    })
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Scores a set of reconstructions against the original query embedding.
///
/// `None` marks a reconstruction that came back empty; it contributes a
/// similarity of 0. Returns the per-reconstruction similarities in input order
/// together with the aggregated score.
pub fn score_reconstructions(
    query: &EmbeddingVector,
    reconstructions: &[Option<EmbeddingVector>],
    mode: AggregationMode,
) -> Result<(Vec<f64>, f64)> {
    let sims = reconstructions
        .iter()
        .map(|r| match r {
            Some(v) => cosine_similarity(query, v),
            None => Ok(0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let score = aggregate_similarities(&sims, mode)?;
    Ok((sims, score))
}
