//! Confusion matrices and macro / weighted precision, recall and F1.
//!
//! Undefined ratios (no predictions or no gold examples for a class) are
//! reported as 0 and still count toward macro averages.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("class code {code} out of range for {classes} classes")]
    CodeOutOfRange { code: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no reports to aggregate")]
    NoReports,
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion(golds: &[usize], preds: &[usize], class_names: &[String]) -> Result<ConfusionMatrix, MetricsError> {
    if golds.len() != preds.len() || golds.is_empty() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (&g, &p) in golds.iter().zip(preds) {
        for code in [g, p] {
            if code >= c {
                return Err(MetricsError::CodeOutOfRange { code, classes: c });
            }
        }
        counts[g][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let c = cm.classes();
    let mut warnings = Vec::new();
    let mut per_class = Vec::with_capacity(c);
    for k in 0..c {
        let tp = cm.counts[k][k];
        let support: u64 = cm.counts[k].iter().sum();
        let predicted: u64 = cm.counts.iter().map(|row| row[k]).sum();
        let name = &cm.class_names[k];
        let precision = ratio(tp, predicted).unwrap_or_else(|| {
            warnings.push(format!("precision of class {name} undefined (no predictions); set to 0"));
            0.0
        });
        let recall = ratio(tp, support).unwrap_or_else(|| {
            warnings.push(format!("recall of class {name} undefined (no support); set to 0"));
            0.0
        });
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            name: name.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let n = c as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / n,
    };
    let weight = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    let weighted = Averages {
        precision: weight(|m| m.precision),
        recall: weight(|m| m.recall),
        f1: weight(|m| m.f1),
    };
    let correct: u64 = (0..c).map(|k| cm.counts[k][k]).sum();
    Ok(MetricsReport {
        per_class,
        macro_avg,
        weighted,
        accuracy: correct as f64 / total as f64,
        confusion: cm.clone(),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Unweighted mean ± std over per-fold reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub folds: usize,
    pub accuracy: MeanStd,
    pub macro_precision: MeanStd,
    pub macro_recall: MeanStd,
    pub macro_f1: MeanStd,
    pub weighted_precision: MeanStd,
    pub weighted_recall: MeanStd,
    pub weighted_f1: MeanStd,
}

impl AggregateReport {
    pub fn macro_means(&self) -> Averages {
        Averages {
            precision: self.macro_precision.mean,
            recall: self.macro_recall.mean,
            f1: self.macro_f1.mean,
        }
    }

    pub fn weighted_means(&self) -> Averages {
        Averages {
            precision: self.weighted_precision.mean,
            recall: self.weighted_recall.mean,
            f1: self.weighted_f1.mean,
        }
    }
}

pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<AggregateReport, MetricsError> {
    let reports: Vec<&MetricsReport> = reports.into_iter().collect();
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
    Ok(AggregateReport {
        folds: reports.len(),
        accuracy: col(|r| r.accuracy),
        macro_precision: col(|r| r.macro_avg.precision),
        macro_recall: col(|r| r.macro_avg.recall),
        macro_f1: col(|r| r.macro_avg.f1),
        weighted_precision: col(|r| r.weighted.precision),
        weighted_recall: col(|r| r.weighted.recall),
        weighted_f1: col(|r| r.weighted.f1),
    })
}

/// Aligned text table: one row per entry, Macro P/R/F1 then Weighted P/R/F1,
/// as percentages with one decimal.
pub fn render_table(rows: &[(String, Averages, Averages)]) -> String {
    let name_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_w$} | {:>7} {:>7} {:>8} | {:>10} {:>10} {:>11}",
        "Model", "Macro-P", "Macro-R", "Macro-F1", "Weighted-P", "Weighted-R", "Weighted-F1"
    );
    let _ = writeln!(out, "{}", "-".repeat(name_w + 3 + 24 + 3 + 33));
    for (name, m, w) in rows {
        let pct = |v: f64| format!("{:.1}", v * 100.0);
        let _ = writeln!(
            out,
            "{:<name_w$} | {:>7} {:>7} {:>8} | {:>10} {:>10} {:>11}",
            name,
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            pct(w.precision),
            pct(w.recall),
            pct(w.f1)
        );
    }
    out
}
