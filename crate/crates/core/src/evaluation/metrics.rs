use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label], positive: Label) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Gmean,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Gmean];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Gmean => "gmean",
        })
    }
}

/// Metrics with a zero denominator are 0 and listed in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gmean: f64,
    pub degenerate: BTreeSet<Metric>,
}

impl MetricSet {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Gmean => self.gmean,
        }
    }

    /// Unweighted mean; the result is flagged for any metric flagged in an input.
    pub fn mean(sets: &[MetricSet]) -> Option<MetricSet> {
        if sets.is_empty() {
            return None;
        }
        let n = sets.len() as f64;
        let avg = |m: Metric| sets.iter().map(|s| s.get(m)).sum::<f64>() / n;
        Some(MetricSet {
            accuracy: avg(Metric::Accuracy),
            precision: avg(Metric::Precision),
            recall: avg(Metric::Recall),
            f1: avg(Metric::F1),
            gmean: avg(Metric::Gmean),
            degenerate: sets.iter().flat_map(|s| s.degenerate.iter().copied()).collect(),
        })
    }
}

fn ratio(num: u64, den: u64, metric: Metric, flags: &mut BTreeSet<Metric>) -> f64 {
    if den == 0 {
        flags.insert(metric);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall, F1 (`2tp / (2tp + fp + fn)`) and
/// G-mean (`sqrt(recall * specificity)`, specificity `tn / (tn + fp)`).
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricSet, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::Empty);
    }
    let mut flags = BTreeSet::new();
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), Metric::Accuracy, &mut flags);
    let precision = ratio(cm.tp, cm.tp + cm.fp, Metric::Precision, &mut flags);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, Metric::Recall, &mut flags);
    let f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_, Metric::F1, &mut flags);
    let gmean = if cm.tp + cm.fn_ == 0 || cm.tn + cm.fp == 0 {
        flags.insert(Metric::Gmean);
        0.0
    } else {
        let specificity = cm.tn as f64 / (cm.tn + cm.fp) as f64;
        (recall * specificity).sqrt()
    };
    Ok(MetricSet { accuracy, precision, recall, f1, gmean, degenerate: flags })
}

/// Sample standard deviation, `sqrt(sum (x - mean)^2 / (w - 1))`.
pub fn sample_std(values: &[f64]) -> Result<f64, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    if values.iter().all(|&v| v == values[0]) {
        // the floating-point mean of equal values need not equal them
        return Ok(0.0);
    }
    let w = values.len() as f64;
    let mean = values.iter().sum::<f64>() / w;
    Ok((values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (w - 1.0)).sqrt())
}
