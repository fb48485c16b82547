//! Confusion matrices and classification metrics, multi-class and binary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix indexed `(true, predicted)` in fixed class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    pub fn row_sum(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

/// Count predictions into a confusion matrix.
pub fn confusion(
    y_true: &[usize],
    y_pred: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("cannot build a confusion matrix from zero items"));
    }
    let k = class_names.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::invalid(format!("label outside the {k}-class space")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names: class_names.to_vec() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// The four reported metrics plus per-class detail. Zero-division cells
/// yield 0 and are listed in `zero_division_flags` instead of NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub encoding: String,
    pub task: String,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub zero_division_flags: Vec<String>,
}

impl MetricsReport {
    pub fn with_names(mut self, model: &str, encoding: &str, task: &str) -> Self {
        self.model = model.to_string();
        self.encoding = encoding.to_string();
        self.task = task.to_string();
        self
    }
}

/// Compute accuracy, precision, recall, and F1 from a confusion matrix.
/// Macro averages are unweighted means; weighted averages use true-class
/// support.
pub fn metrics(matrix: &ConfusionMatrix) -> MetricsReport {
    let k = matrix.n_classes();
    let total = matrix.total() as f64;
    let trace: usize = (0..k).map(|i| matrix.counts[i][i]).sum();
    let accuracy = trace as f64 / total;

    let mut per_class = Vec::with_capacity(k);
    let mut flags = Vec::new();
    for c in 0..k {
        let diag = matrix.counts[c][c] as f64;
        let col = matrix.col_sum(c) as f64;
        let row = matrix.row_sum(c) as f64;
        let precision = if col == 0.0 {
            flags.push(format!("precision[{}]=0/0", matrix.class_names[c]));
            0.0
        } else {
            diag / col
        };
        let recall = if row == 0.0 {
            flags.push(format!("recall[{}]=0/0", matrix.class_names[c]));
            0.0
        } else {
            diag / row
        };
        let f1 = if precision + recall == 0.0 {
            if col != 0.0 || row != 0.0 {
                flags.push(format!("f1[{}]=0", matrix.class_names[c]));
            }
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            class: matrix.class_names[c].clone(),
            precision,
            recall,
            f1,
            support: matrix.row_sum(c),
        });
    }

    let kf = k as f64;
    let macro_precision = per_class.iter().map(|m| m.precision).sum::<f64>() / kf;
    let macro_recall = per_class.iter().map(|m| m.recall).sum::<f64>() / kf;
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / kf;
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total
    };

    MetricsReport {
        model: String::new(),
        encoding: String::new(),
        task: String::new(),
        accuracy,
        macro_precision,
        macro_recall,
        macro_f1,
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
        zero_division_flags: flags,
    }
}

/// Compact CSV mirroring the headline table layout; precision/recall/F1
/// are macro averages (the extended export carries both).
pub fn write_metrics_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["model", "encoding", "task", "accuracy", "precision", "recall", "f1"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for r in reports {
        w.write_record([
            r.model.as_str(),
            r.encoding.as_str(),
            r.task.as_str(),
            &format!("{:.4}", r.accuracy),
            &format!("{:.4}", r.macro_precision),
            &format!("{:.4}", r.macro_recall),
            &format!("{:.4}", r.macro_f1),
        ])
        .map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Extended export: per-class rows plus macro and weighted averages.
pub fn write_metrics_extended_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    w.write_record(["model", "encoding", "task", "class", "precision", "recall", "f1", "support"])
        .map_err(|e| Error::invalid(e.to_string()))?;
    for r in reports {
        for m in &r.per_class {
            w.write_record([
                r.model.as_str(),
                r.encoding.as_str(),
                r.task.as_str(),
                m.class.as_str(),
                &format!("{:.6}", m.precision),
                &format!("{:.6}", m.recall),
                &format!("{:.6}", m.f1),
                &m.support.to_string(),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        for (name, p, rec, f1) in [
            ("macro", r.macro_precision, r.macro_recall, r.macro_f1),
            ("weighted", r.weighted_precision, r.weighted_recall, r.weighted_f1),
        ] {
            w.write_record([
                r.model.as_str(),
                r.encoding.as_str(),
                r.task.as_str(),
                name,
                &format!("{p:.6}"),
                &format!("{rec:.6}"),
                &format!("{f1:.6}"),
                &r.per_class.iter().map(|m| m.support).sum::<usize>().to_string(),
            ])
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Export a confusion matrix with class names on both axes.
pub fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(matrix.class_names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::invalid(e.to_string()))?;
    for (i, row) in matrix.counts.iter().enumerate() {
        let mut record = vec![matrix.class_names[i].clone()];
        record.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&record).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
