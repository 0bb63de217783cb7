//! Confusion matrix, per-class precision/recall/F-score and reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidShape {
                shape: vec![k],
                reason: "confusion matrix must be square and non-empty".into(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        for label in [truth, predicted] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn column_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// Percent correct; `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| 100.0 * self.trace() as f64 / total as f64)
    }
}

/// Harmonic mean of precision and recall (same units).
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One row of the report. Percentages; `None` where undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    /// Per-class accuracy, reported as the class recall.
    pub accuracy: Option<f64>,
    pub support: u64,
}

impl ClassMetrics {
    pub fn from_precision_recall(name: impl Into<String>, precision: f64, recall: f64) -> Self {
        ClassMetrics {
            name: name.into(),
            precision: Some(precision),
            recall: Some(recall),
            f_score: Some(f_score(precision, recall)),
            accuracy: Some(recall),
            support: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroAverage {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_score: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_average: MacroAverage,
    /// trace / total, percent.
    pub overall_accuracy: Option<f64>,
    pub samples: u64,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Column means over the classes where each value is defined.
pub fn macro_average(classes: &[ClassMetrics]) -> MacroAverage {
    MacroAverage {
        precision: mean(classes.iter().map(|c| c.precision)),
        recall: mean(classes.iter().map(|c| c.recall)),
        f_score: mean(classes.iter().map(|c| c.f_score)),
        accuracy: mean(classes.iter().map(|c| c.accuracy)),
    }
}

/// Per-class and averaged metrics; `names` may be shorter than the class count.
pub fn compute_metrics(cm: &ConfusionMatrix, names: &[String]) -> Result<MetricsReport> {
    let mut warnings = Vec::new();
    let mut classes = Vec::with_capacity(cm.classes());
    for c in 0..cm.classes() {
        let name = names.get(c).cloned().unwrap_or_else(|| format!("class {c}"));
        let tp = cm.counts[c][c] as f64;
        let predicted = cm.column_sum(c);
        let actual = cm.row_sum(c);
        let precision = (predicted > 0).then(|| 100.0 * tp / predicted as f64);
        let recall = (actual > 0).then(|| 100.0 * tp / actual as f64);
        let f = match (precision, recall) {
            (Some(p), Some(r)) => Some(f_score(p, r)),
            _ => None,
        };
        if predicted == 0 && actual == 0 {
            warnings.push(format!("{name}: no samples and no predictions; excluded from averages"));
        } else if actual == 0 {
            warnings.push(format!("{name}: no samples; recall undefined"));
        } else if predicted == 0 {
            warnings.push(format!("{name}: never predicted; precision undefined"));
        }
        classes.push(ClassMetrics {
            name,
            precision,
            recall,
            f_score: f,
            accuracy: recall,
            support: actual,
        });
    }
    let macro_average = macro_average(&classes);
    Ok(MetricsReport {
        classes,
        macro_average,
        overall_accuracy: cm.accuracy(),
        samples: cm.total(),
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Table with one row per class plus the average row.
pub fn render_text(m: &MetricsReport) -> String {
    let width = m.classes.iter().map(|c| c.name.len()).chain([7]).max().unwrap_or(7);
    let mut out = String::new();
    writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f-score", "accuracy", "support").ok();
    for c in &m.classes {
        writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7}",
            c.name,
            cell(c.precision),
            cell(c.recall),
            cell(c.f_score),
            cell(c.accuracy),
            c.support
        )
        .ok();
    }
    let a = &m.macro_average;
    writeln!(
        out,
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>7}",
        "average",
        cell(a.precision),
        cell(a.recall),
        cell(a.f_score),
        cell(a.accuracy),
        m.samples
    )
    .ok();
    writeln!(out, "overall accuracy: {}", cell(m.overall_accuracy)).ok();
    for w in &m.warnings {
        writeln!(out, "warning: {w}").ok();
    }
    out
}

pub fn report(m: &MetricsReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Text => Ok(render_text(m)),
        ReportFormat::Json => serde_json::to_string_pretty(m).map_err(|e| Error::format("metrics report", e.to_string())),
    }
}

pub fn parse_report(json: &str) -> Result<MetricsReport> {
    serde_json::from_str(json).map_err(|e| Error::format("metrics report", e.to_string()))
}
