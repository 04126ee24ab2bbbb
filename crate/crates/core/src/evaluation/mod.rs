//! Confusion-matrix metrics, ROC/AUC, repeated stratified cross-validation
//! and max/mean/std aggregation.

mod cv;
mod metrics;
mod report;
mod roc;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::svm::SvmError;

pub use cv::{cross_validate, cross_validate_with_folds, FoldResult, RunResult};
pub use metrics::{compute_metrics, confusion, sample_std, ConfusionMatrix, Metric, MetricSet};
pub use report::{
    aggregate, render_auc_table, render_roc_svg, render_table, AggregateReport, Summary, Table, TABLE_METRICS,
};
pub use roc::{auc, roc_curve, RocCurve};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no samples to evaluate")]
    Empty,
    #[error("need at least 2 values for a sample standard deviation, got {0}")]
    TooFewValues(usize),
    #[error("need at least 2 runs to aggregate, got {0}")]
    TooFewRuns(usize),
    #[error("ROC/AUC needs both classes present")]
    SingleClass,
    #[error("score is NaN")]
    NanScore,
    #[error("fold {0} has no test samples")]
    EmptyFold(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: SvmError,
    },
    #[error(transparent)]
    Folds(#[from] DatasetError),
}
