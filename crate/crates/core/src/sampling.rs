//! Temperature-scaled softmax over logits, used by the simulated generator.

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::error::{Error, Result};

/// `P_i = exp(z_i / T) / sum_j exp(z_j / T)`, evaluated after subtracting the
/// largest scaled logit so that no exponent overflows.
pub fn softmax_probabilities(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check(logits, temperature)?;
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| libm::exp(s - max)).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Draws one index from the softmax distribution.
pub fn softmax_sample<R: RngCore + ?Sized>(
    logits: &[f64],
    temperature: f64,
    rng: &mut R,
) -> Result<usize> {
    let probs = softmax_probabilities(logits, temperature)?;
    // 53 random bits -> uniform in [0, 1)
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding slack above the final partial sum
    Ok(probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1))
}

fn check(logits: &[f64], temperature: f64) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Empty("logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    Ok(())
}
