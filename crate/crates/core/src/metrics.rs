//! Detection metrics: ROC AUC, balanced accuracy, hallucination rate and
//! threshold calibration.
//!
//! Throughout, a *positive* is a hallucination. [`roc_auc`] expects scores
//! oriented so that larger means "more likely hallucinated"; callers holding
//! similarities pass `1 - similarity`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic: the probability
/// that a random positive outscores a random negative, ties counting one half.
///
/// Computed from mid-ranks in integer arithmetic, so the result is the exact
/// pairwise fraction rounded once.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|l| **l).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // sum over positives of twice their (1-based) mid-rank
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1 share the mid-rank (start + end + 2) / 2
        let twice_mid = (start + end + 2) as u128;
        let pos_in_group = order[start..=end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end + 1;
    }
    let twice_u = twice_rank_sum - positives * (positives + 1);
    Ok(twice_u as f64 / (2 * positives * negatives) as f64)
}

/// Confusion counts for hallucination verdicts against ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_verdicts(verdicts: &[bool], labels: &[bool]) -> Result<Self> {
        check_len(verdicts.len(), labels.len())?;
        let mut c = Confusion::default();
        for (&v, &l) in verdicts.iter().zip(labels) {
            match (v, l) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total() > 0).then(|| (self.tp + self.tn) as f64 / self.total() as f64)
    }

    /// `(TPR + TNR) / 2`; `None` unless both classes are present.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        if self.positives() == 0 || self.negatives() == 0 {
            return None;
        }
        let tpr = self.tp as f64 / self.positives() as f64;
        let tnr = self.tn as f64 / self.negatives() as f64;
        Some((tpr + tnr) / 2.0)
    }
}

/// Balanced accuracy, or plain accuracy when the labels hold a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Accuracy {
    Balanced(f64),
    Plain(f64),
}

impl Accuracy {
    pub fn value(self) -> f64 {
        match self {
            Accuracy::Balanced(v) | Accuracy::Plain(v) => v,
        }
    }

    pub fn is_balanced(self) -> bool {
        matches!(self, Accuracy::Balanced(_))
    }
}

pub fn balanced_accuracy(verdicts: &[bool], labels: &[bool]) -> Result<Accuracy> {
    let c = Confusion::from_verdicts(verdicts, labels)?;
    if let Some(b) = c.balanced_accuracy() {
        return Ok(Accuracy::Balanced(b));
    }
    c.accuracy()
        .map(Accuracy::Plain)
        .ok_or(Error::Empty("verdicts"))
}

pub fn hallucination_rate(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    Ok(labels.iter().filter(|l| **l).count() as f64 / labels.len() as f64)
}

/// A calibrated similarity threshold and the balanced accuracy it achieves.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Threshold {
    pub value: f64,
    pub balanced_accuracy: f64,
}

/// Picks the similarity threshold that best separates similar pairs (kept
/// when `sim >= tau`) from dissimilar ones (`sim < tau`).
///
/// Candidate thresholds are the open gaps between consecutive distinct
/// similarity values; the balanced accuracy is constant inside each gap.
/// Among the gaps reaching the best balanced accuracy the widest wins (the
/// lowest on a tie) and its midpoint is returned. With a single distinct
/// value there is no gap and that value is returned.
pub fn calibrate_threshold(similar: &[f64], dissimilar: &[f64]) -> Result<Threshold> {
    if similar.is_empty() || dissimilar.is_empty() {
        return Err(Error::Empty("calibration pairs"));
    }
    if similar.iter().chain(dissimilar).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("calibration similarities"));
    }
    let mut points: Vec<(f64, bool)> = similar
        .iter()
        .map(|&s| (s, true))
        .chain(dissimilar.iter().map(|&s| (s, false)))
        .collect();
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let n_sim = similar.len() as f64;
    let n_dis = dissimilar.len() as f64;
    // counts of points at or below the current value
    let (mut sim_below, mut dis_below) = (0usize, 0usize);
    let mut best: Option<(f64, f64, f64)> = None; // (ba, width, midpoint)
    let mut i = 0;
    while i < points.len() {
        let value = points[i].0;
        while i < points.len() && points[i].0 == value {
            if points[i].1 {
                sim_below += 1;
            } else {
                dis_below += 1;
            }
            i += 1;
        }
        let Some(&(next, _)) = points.get(i) else {
            break;
        };
        let tpr = (similar.len() - sim_below) as f64 / n_sim;
        let tnr = dis_below as f64 / n_dis;
        let ba = (tpr + tnr) / 2.0;
        let width = next - value;
        let mid = value + width / 2.0;
        let better = match best {
            None => true,
            Some((b, w, _)) => ba > b || (ba == b && width > w),
        };
        if better {
            best = Some((ba, width, mid));
        }
    }
    Ok(match best {
        Some((ba, _, mid)) => Threshold {
            value: mid,
            balanced_accuracy: ba,
        },
        None => Threshold {
            value: points[0].0,
            balanced_accuracy: 0.5,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_and_inverted() {
        let labels = [true, true, false, false];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &labels).unwrap(), 0.5);
    }

    #[test]
    fn auc_errors() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass));
        assert_eq!(
            roc_auc(&[0.1], &[true, false]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn balanced_accuracy_examples() {
        let labels = [true, false, true, false, false];
        assert_eq!(balanced_accuracy(&labels, &labels).unwrap(), Accuracy::Balanced(1.0));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        assert_eq!(balanced_accuracy(&flipped, &labels).unwrap(), Accuracy::Balanced(0.0));
        // TP=3, FN=1, TN=2, FP=2
        let verdicts = [true, true, true, false, false, false, true, true];
        let labels = [true, true, true, true, false, false, false, false];
        assert_eq!(
            balanced_accuracy(&verdicts, &labels).unwrap(),
            Accuracy::Balanced(0.625)
        );
    }

    #[test]
    fn single_class_falls_back_to_accuracy() {
        let acc = balanced_accuracy(&[false, false, true, false], &[false; 4]).unwrap();
        assert_eq!(acc, Accuracy::Plain(0.75));
        assert!(!acc.is_balanced());
        assert!(balanced_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn rates() {
        assert_eq!(hallucination_rate(&[false; 3]).unwrap(), 0.0);
        assert_eq!(hallucination_rate(&[true, false, false, true]).unwrap(), 0.5);
        assert!(hallucination_rate(&[]).is_err());
    }

    #[test]
    fn calibration_separable() {
        let t = calibrate_threshold(&[0.95; 4], &[0.5; 3]).unwrap();
        assert!((t.value - 0.725).abs() < 1e-9);
        assert_eq!(t.balanced_accuracy, 1.0);
    }

    #[test]
    fn calibration_degenerate() {
        let t = calibrate_threshold(&[0.7], &[0.7]).unwrap();
        assert_eq!(t.value, 0.7);
        assert!(calibrate_threshold(&[], &[0.1]).is_err());
    }
}
