//! Metric reports folded from evaluation records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use interrogate_core::{balanced_accuracy, hallucination_rate, roc_auc, Confusion};
use serde::{Deserialize, Serialize};

use super::harness::{parse_k_sweep_name, EvalRecord};
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const ORIENTATION_NOTE: &str = "Scores are hallucination-oriented (higher = more likely hallucinated): \
1 - similarity for interrogate and embed-cosine, the unsupported fraction for selfcheck. \
AUC is the probability that a hallucinated item outscores a faithful one, ties counting 1/2. \
When every label has the same class, AUC is omitted and plain accuracy replaces balanced accuracy.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub task: String,
    pub forward_backend: String,
    pub method: String,
    pub items: usize,
    /// Items skipped because the forward pass or this method failed.
    pub failed: usize,
    pub hallucination_rate: f64,
    pub auc: Option<f64>,
    /// Balanced accuracy, or plain accuracy when `balanced` is false.
    pub accuracy: f64,
    pub balanced: bool,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub score_orientation: String,
    pub rows: Vec<MethodRow>,
}

/// Published reference points for the same protocol on live models. Shown
/// for context only; nothing here is asserted.
pub const REFERENCE_RATES: &[(&str, [&str; 3])] = &[
    ("GPT3", ["37%", "38%", "0%"]),
    ("Llama-2 (7B)", ["87%", "66%", "25%"]),
    ("Llama-2 (13B)", ["72%", "58%", "60%"]),
];

/// (forward model, backward models, task, AUC, B-ACC)
pub const REFERENCE_DETECTION: &[(&str, &str, &str, f64, f64)] = &[
    ("Llama-2 (7B)", "ensemble", "movies", 0.874, 0.813),
    ("GPT3", "ensemble", "movies", 0.818, 0.699),
];

type CellKey = (String, String, String);

pub fn build_report(records: &[EvalRecord]) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Config("no evaluation records".into()));
    }
    // (task, forward, method) -> (scores, verdicts, labels, failed)
    let mut cells: BTreeMap<CellKey, (Vec<f64>, Vec<bool>, Vec<bool>, usize)> = BTreeMap::new();
    let mut methods_by_cell: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for r in records {
        let names = r.method_scores.keys().chain(r.method_errors.keys()).cloned();
        let entry = methods_by_cell.entry((r.record.task.to_string(), r.forward_backend.clone())).or_default();
        for n in names {
            if !entry.contains(&n) {
                entry.push(n);
            }
        }
    }
    for r in records {
        let cell = (r.record.task.to_string(), r.forward_backend.clone());
        for method in &methods_by_cell[&cell] {
            let key = (cell.0.clone(), cell.1.clone(), method.clone());
            let slot = cells.entry(key).or_default();
            match (r.ground_truth_label, r.method_scores.get(method), r.method_verdicts.get(method)) {
                (Some(label), Some(&score), Some(&verdict)) => {
                    slot.0.push(score);
                    slot.1.push(verdict);
                    slot.2.push(label);
                }
                _ => slot.3 += 1,
            }
        }
    }
    let mut rows = Vec::new();
    for ((task, forward_backend, method), (scores, verdicts, labels, failed)) in cells {
        if labels.is_empty() {
            rows.push(MethodRow {
                task,
                forward_backend,
                method,
                items: 0,
                failed,
                hallucination_rate: 0.0,
                auc: None,
                accuracy: 0.0,
                balanced: false,
                confusion: Confusion::default(),
            });
            continue;
        }
        let accuracy = balanced_accuracy(&verdicts, &labels)?;
        rows.push(MethodRow {
            items: labels.len(),
            failed,
            hallucination_rate: hallucination_rate(&labels)?,
            auc: roc_auc(&scores, &labels).ok(),
            accuracy: accuracy.value(),
            balanced: accuracy.is_balanced(),
            confusion: Confusion::from_verdicts(&verdicts, &labels)?,
            task,
            forward_backend,
            method,
        });
    }
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        score_orientation: ORIENTATION_NOTE.into(),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Fixed-width table with the orientation note as header and reference
/// values as footer.
pub fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", report.score_orientation);
    let _ = writeln!(
        out,
        "{:<8} {:<14} {:<18} {:>5} {:>6} {:>6} {:>7} {:>9} {:>4} {:>4} {:>4} {:>4}",
        "task", "forward", "method", "n", "failed", "rate", "auc", "b-acc", "tp", "tn", "fp", "fn"
    );
    for r in &report.rows {
        let acc = if r.balanced { format!("{:.3}", r.accuracy) } else { format!("{:.3}*", r.accuracy) };
        let c = r.confusion;
        let _ = writeln!(
            out,
            "{:<8} {:<14} {:<18} {:>5} {:>6} {:>6.3} {:>7} {:>9} {:>4} {:>4} {:>4} {:>4}",
            r.task, r.forward_backend, r.method, r.items, r.failed, r.hallucination_rate, fmt_opt(r.auc), acc, c.tp, c.tn, c.fp, c.fn_
        );
    }
    if report.rows.iter().any(|r| !r.balanced) {
        let _ = writeln!(out, "* single-class labels: plain accuracy, AUC omitted");
    }
    let _ = writeln!(out, "\nPublished reference values for live models (context only, not reproduced here)");
    let _ = writeln!(out, "hallucination rate  {:<14} {:>6} {:>6} {:>6}", "forward", "movies", "books", "gci");
    for (model, rates) in REFERENCE_RATES {
        let _ = writeln!(out, "                    {:<14} {:>6} {:>6} {:>6}", model, rates[0], rates[1], rates[2]);
    }
    for (fwd, bwd, task, auc, bacc) in REFERENCE_DETECTION {
        let _ = writeln!(out, "detection           {fwd} -> {bwd} backward, {task}: auc {auc:.3}, b-acc {bacc:.3}");
    }
    out
}

/// One point of the accuracy-versus-K series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub task: String,
    pub forward_backend: String,
    pub k: usize,
    pub auc: Option<f64>,
    pub balanced_accuracy: f64,
}

/// The `interrogate@k=..` rows as a series, plus a `mean` row per `k`
/// averaging every task and forward backend.
pub fn k_series(report: &MetricsReport) -> Vec<KPoint> {
    let mut points: Vec<KPoint> = report
        .rows
        .iter()
        .filter(|r| r.items > 0)
        .filter_map(|r| {
            Some(KPoint {
                k: parse_k_sweep_name(&r.method)?,
                task: r.task.clone(),
                forward_backend: r.forward_backend.clone(),
                auc: r.auc,
                balanced_accuracy: r.accuracy,
            })
        })
        .collect();
    points.sort_by(|a, b| (a.k, &a.task, &a.forward_backend).cmp(&(b.k, &b.task, &b.forward_backend)));
    let mut by_k: BTreeMap<usize, Vec<&KPoint>> = BTreeMap::new();
    for p in &points {
        by_k.entry(p.k).or_default().push(p);
    }
    let mut means = Vec::new();
    for (k, ps) in by_k {
        let aucs: Vec<f64> = ps.iter().filter_map(|p| p.auc).collect();
        means.push(KPoint {
            task: "mean".into(),
            forward_backend: "all".into(),
            k,
            auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
            balanced_accuracy: ps.iter().map(|p| p.balanced_accuracy).sum::<f64>() / ps.len() as f64,
        });
    }
    points.extend(means);
    points
}

pub const K_SERIES_COLUMNS: &str = "task,forward_backend,k,auc,balanced_accuracy";

/// CSV with header [`K_SERIES_COLUMNS`]; a missing AUC is an empty field.
pub fn k_series_csv(points: &[KPoint]) -> String {
    let mut out = format!("{K_SERIES_COLUMNS}\n");
    for p in points {
        let auc = p.auc.map_or_else(String::new, |a| format!("{a:.6}"));
        let _ = writeln!(out, "{},{},{},{},{:.6}", p.task, p.forward_backend, p.k, auc, p.balanced_accuracy);
    }
    out
}
