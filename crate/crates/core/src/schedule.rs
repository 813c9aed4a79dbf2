//! Per-pass sampling temperatures for the backward (query reconstruction) passes.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Linear temperature ramp starting at the model's default temperature.
///
/// Pass `i` (for `0 <= i < k`) runs at `t0 + (1 - t0) / k * i`, so the last
/// pass stays strictly below 1.0 whenever `t0 < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TemperatureSchedule {
    t0: f64,
    k: usize,
}

impl TemperatureSchedule {
    pub fn new(t0: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(t0.is_finite() && t0 > 0.0 && t0 <= 1.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "base temperature must lie in (0, 1], got {t0}"
            )));
        }
        Ok(Self { t0, k })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn temperature(&self, pass: usize) -> f64 {
        self.t0 + (1.0 - self.t0) / self.k as f64 * pass as f64
    }

    pub fn temperatures(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.temperature(i)).collect()
    }

    /// Every pass at `t0`; the fixed-temperature ablation.
    pub fn constant(&self) -> Vec<f64> {
        alloc::vec![self.t0; self.k]
    }
}

/// Convenience wrapper around [`TemperatureSchedule::temperatures`].
pub fn temperature_schedule(t0: f64, k: usize) -> Result<Vec<f64>> {
    Ok(TemperatureSchedule::new(t0, k)?.temperatures())
}
