//! Accuracy aggregation split by single-/multi-region questions, with a
//! signed delta table against a baseline strategy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, PredictionRecord, Strategy};

/// What the report needs to know about each grounded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundedInfo {
    pub dataset: Dataset,
    pub region_count: usize,
}

/// Join key for predictions: sample_id to grounding facts.
pub type GroundedIndex = HashMap<String, GroundedInfo>;

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Correct/total counts for one split, with the percentage (one decimal)
/// or `None` when the split is empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub total: usize,
    pub correct: usize,
    pub percent: Option<f64>,
}

impl SplitAccuracy {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        if correct {
            self.correct += 1;
        }
    }

    fn finalize(&mut self) {
        self.percent = if self.total > 0 {
            Some(round1(100.0 * self.correct as f64 / self.total as f64))
        } else {
            None
        };
    }
}

/// Accuracy of one strategy on one dataset (or on all datasets when
/// `dataset` is `None`). Overall counts the union of both splits, not the
/// mean of their percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: Option<Dataset>,
    pub strategy: Strategy,
    pub single: SplitAccuracy,
    pub multi: SplitAccuracy,
    pub overall: SplitAccuracy,
}

/// Signed percentage-point differences against the baseline strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub dataset: Option<Dataset>,
    pub strategy: Strategy,
    pub single: Option<f64>,
    pub multi: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub baseline: Strategy,
    pub rows: Vec<ReportRow>,
    pub deltas: Vec<DeltaRow>,
}

/// Aggregate predictions into per-dataset and all-dataset accuracy rows
/// plus the delta table. Every prediction must join to the grounded index.
pub fn accuracy_report(
    preds: &[PredictionRecord],
    index: &GroundedIndex,
    baseline: Strategy,
) -> Result<Report> {
    let mut unjoinable: Vec<String> = preds
        .iter()
        .filter(|p| !index.contains_key(&p.sample_id))
        .map(|p| p.sample_id.clone())
        .collect();
    if !unjoinable.is_empty() {
        unjoinable.sort();
        unjoinable.dedup();
        return Err(Error::Report(unjoinable));
    }

    let mut cells: BTreeMap<(Option<&'static str>, &'static str), ReportRow> = BTreeMap::new();
    for p in preds {
        let info = index[&p.sample_id];
        for dataset in [Some(info.dataset), None] {
            let key = (dataset.map(|d| d.as_str()), p.strategy.as_str());
            let row = cells.entry(key).or_insert_with(|| ReportRow {
                dataset,
                strategy: p.strategy,
                single: SplitAccuracy::default(),
                multi: SplitAccuracy::default(),
                overall: SplitAccuracy::default(),
            });
            if info.region_count <= 1 {
                row.single.add(p.correct);
            } else {
                row.multi.add(p.correct);
            }
            row.overall.add(p.correct);
        }
    }

    let mut rows: Vec<ReportRow> = Vec::new();
    for dataset in Dataset::ALL.iter().map(|d| Some(*d)).chain([None]) {
        for strategy in Strategy::ALL {
            let key = (dataset.map(|d| d.as_str()), strategy.as_str());
            if let Some(mut row) = cells.remove(&key) {
                row.single.finalize();
                row.multi.finalize();
                row.overall.finalize();
                rows.push(row);
            }
        }
    }

    let baseline_by_scope: HashMap<Option<&'static str>, ReportRow> = rows
        .iter()
        .filter(|r| r.strategy == baseline)
        .map(|r| (r.dataset.map(|d| d.as_str()), r.clone()))
        .collect();
    let delta = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(round1(x - y)),
        _ => None,
    };
    let deltas = rows
        .iter()
        .filter(|r| r.strategy != baseline)
        .filter_map(|r| {
            let base = baseline_by_scope.get(&r.dataset.map(|d| d.as_str()))?;
            Some(DeltaRow {
                dataset: r.dataset,
                strategy: r.strategy,
                single: delta(r.single.percent, base.single.percent),
                multi: delta(r.multi.percent, base.multi.percent),
                overall: delta(r.overall.percent, base.overall.percent),
            })
        })
        .collect();

    Ok(Report { baseline, rows, deltas })
}

fn scope_label(dataset: &Option<Dataset>) -> &'static str {
    dataset.map(|d| d.as_str()).unwrap_or("all")
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "\u{2014}".to_string())
}

fn fmt_delta(v: Option<f64>) -> String {
    v.map(|x| format!("{x:+.1}")).unwrap_or_else(|| "\u{2014}".to_string())
}

/// Plain-text rendering: the accuracy table followed by the signed delta
/// table (positive means improvement over the baseline).
pub fn render_report_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("Accuracy (%)\n");
    out.push_str(&format!(
        "{:<10} {:<13} {:>8} {:>8} {:>8}\n",
        "dataset", "strategy", "single", "multi", "overall"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:<10} {:<13} {:>8} {:>8} {:>8}\n",
            scope_label(&r.dataset),
            r.strategy.as_str(),
            fmt_pct(r.single.percent),
            fmt_pct(r.multi.percent),
            fmt_pct(r.overall.percent),
        ));
    }
    out.push_str(&format!("\nDelta vs {} (%)\n", report.baseline.as_str()));
    out.push_str(&format!(
        "{:<10} {:<13} {:>8} {:>8} {:>8}\n",
        "dataset", "strategy", "single", "multi", "overall"
    ));
    for d in &report.deltas {
        out.push_str(&format!(
            "{:<10} {:<13} {:>8} {:>8} {:>8}\n",
            scope_label(&d.dataset),
            d.strategy.as_str(),
            fmt_delta(d.single),
            fmt_delta(d.multi),
            fmt_delta(d.overall),
        ));
    }
    out
}
