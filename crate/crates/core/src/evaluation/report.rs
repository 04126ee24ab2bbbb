//! Roll-ups over repeated cross-validation runs and their table renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{sample_std, Metric};
use super::roc::{auc, roc_curve, RocCurve};
use super::{EvalError, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self, EvalError> {
        let std = sample_std(values)?;
        Ok(Self {
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub model_name: String,
    pub runs: usize,
    pub accuracy: Summary,
    pub gmean: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    /// AUC of the pooled held-out scores of the final run.
    pub auc: f64,
    pub roc: RocCurve,
    /// Runs in which at least one fold had a zero-denominator metric.
    pub degenerate_runs: usize,
}

impl AggregateReport {
    pub fn summary(&self, metric: Metric) -> &Summary {
        match metric {
            Metric::Accuracy => &self.accuracy,
            Metric::Gmean => &self.gmean,
            Metric::Precision => &self.precision,
            Metric::Recall => &self.recall,
            Metric::F1 => &self.f1,
        }
    }
}

/// Max, mean and sample std of each run-level metric across `runs`.
pub fn aggregate(runs: &[RunResult]) -> Result<AggregateReport, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewRuns(runs.len()));
    }
    let summary = |m: Metric| -> Result<Summary, EvalError> {
        let values: Vec<f64> = runs.iter().map(|r| r.metrics.get(m)).collect();
        Summary::of(&values)
    };
    let last = runs.last().expect("non-empty");
    Ok(AggregateReport {
        model_name: runs[0].model_name.clone(),
        runs: runs.len(),
        accuracy: summary(Metric::Accuracy)?,
        gmean: summary(Metric::Gmean)?,
        precision: summary(Metric::Precision)?,
        recall: summary(Metric::Recall)?,
        f1: summary(Metric::F1)?,
        auc: auc(&last.labels, &last.scores)?,
        roc: roc_curve(&last.labels, &last.scores)?,
        degenerate_runs: runs.iter().filter(|r| !r.metrics.degenerate.is_empty()).count(),
    })
}

/// Column order of the three tables.
pub const TABLE_METRICS: [(Metric, &str); 4] = [
    (Metric::Accuracy, "Accuracy"),
    (Metric::Gmean, "GM"),
    (Metric::Precision, "Precision"),
    (Metric::Recall, "Recall"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Max,
    Mean,
    Std,
}

impl Table {
    pub const ALL: [Table; 3] = [Table::Max, Table::Mean, Table::Std];

    pub fn file_name(self) -> &'static str {
        match self {
            Table::Max => "table_max.csv",
            Table::Mean => "table_mean.csv",
            Table::Std => "table_std.csv",
        }
    }
}

/// Max and mean tables are in percent with two decimals; the std table is
/// a fraction with four decimals.
pub fn render_table(table: Table, reports: &[AggregateReport]) -> String {
    let (prefix, unit) = match table {
        Table::Max => ("Max", " (%)"),
        Table::Mean => ("Mean", " (%)"),
        Table::Std => ("Std", ""),
    };
    let mut out = String::from("Models");
    for (_, name) in TABLE_METRICS {
        write!(out, ",{prefix} {name}{unit}").unwrap();
    }
    out.push('\n');
    for r in reports {
        out.push_str(&r.model_name);
        for (metric, _) in TABLE_METRICS {
            let s = r.summary(metric);
            match table {
                Table::Max => write!(out, ",{:.2}", s.max * 100.0),
                Table::Mean => write!(out, ",{:.2}", s.mean * 100.0),
                Table::Std => write!(out, ",{:.4}", s.std),
            }
            .unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn render_auc_table(reports: &[AggregateReport]) -> String {
    let mut out = String::from("Models,AUC\n");
    for r in reports {
        writeln!(out, "{},{:.4}", r.model_name, r.auc).unwrap();
    }
    out
}

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf", "#393b79", "#637939",
];

/// ROC curves of every model on one SVG canvas.
pub fn render_roc_svg(reports: &[AggregateReport]) -> String {
    let (size, pad) = (480.0, 50.0);
    let plot = size - 2.0 * pad;
    let px = |fpr: f64| pad + fpr * plot;
    let py = |tpr: f64| size - pad - tpr * plot;
    let legend_h = 18.0 * reports.len() as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#,
        w = size + 220.0,
        h = size.max(pad + legend_h + 20.0)
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect x="{pad}" y="{pad}" width="{plot}" height="{plot}" fill="none" stroke="#000"/>"##
    )
    .unwrap();
    writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#aaa" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    )
    .unwrap();
    for t in 0..=4 {
        let v = f64::from(t) / 4.0;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#, px(v), size - pad + 16.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, pad - 6.0, py(v) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">False positive rate</text>"#, size / 2.0, size - 12.0).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">True positive rate</text>"#,
        size / 2.0,
        size / 2.0
    )
    .unwrap();
    for (i, r) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = r.roc.points.iter().map(|&(f, t)| format!("{:.2},{:.2}", px(f), py(t))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let ly = pad + 18.0 * i as f64 + 10.0;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            size + 10.0,
            size + 30.0
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{} (AUC {:.3})</text>"#, size + 36.0, ly + 4.0, xml_escape(&r.model_name), r.auc)
            .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
