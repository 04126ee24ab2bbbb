use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, confusion, ConfusionMatrix, MetricSet};
use super::EvalError;
use crate::dataset::{indices_in_fold, stratified_folds, Label};
use crate::svm::{label_for_score, labels_to_targets, train_smo, SvmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub support_vectors: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model_name: String,
    pub run_index: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Unweighted mean of the fold metrics.
    pub metrics: MetricSet,
    /// Held-out decision value of every sample, in input order.
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
}

/// Stratified `k`-fold cross-validation with folds drawn from `seed`.
pub fn cross_validate(
    features: &[Vec<f64>],
    labels: &[Label],
    params: &SvmParams,
    k: usize,
    seed: u64,
) -> Result<RunResult, EvalError> {
    let folds = stratified_folds(labels, k, seed)?;
    cross_validate_with_folds(features, labels, params, &folds, k, seed)
}

/// Cross-validation over a precomputed fold assignment. Each fold trains a
/// fresh standardizer and SVM on the other `k - 1` folds.
pub fn cross_validate_with_folds(
    features: &[Vec<f64>],
    labels: &[Label],
    params: &SvmParams,
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<RunResult, EvalError> {
    if features.len() != labels.len() || folds.len() != labels.len() {
        return Err(EvalError::LengthMismatch(features.len(), labels.len()));
    }
    let targets = labels_to_targets(labels);

    let per_fold: Vec<(FoldResult, Vec<(usize, f64)>)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let test = indices_in_fold(folds, fold);
            let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != fold).collect();
            if test.is_empty() {
                return Err(EvalError::EmptyFold(fold));
            }
            let x: Vec<Vec<f64>> = train.iter().map(|&i| features[i].clone()).collect();
            let y: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
            let fit = train_smo(&x, &y, params).map_err(|source| EvalError::Fold { fold, source })?;

            let mut scored = Vec::with_capacity(test.len());
            for &i in &test {
                let s = fit
                    .model
                    .decision_function(&features[i])
                    .map_err(|source| EvalError::Fold { fold, source })?;
                scored.push((i, s));
            }
            let truth: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
            let pred: Vec<Label> = scored.iter().map(|&(_, s)| label_for_score(s)).collect();
            let cm = confusion(&truth, &pred, Label::Abnormal)?;
            let result = FoldResult {
                fold,
                confusion: cm,
                metrics: compute_metrics(&cm)?,
                support_vectors: fit.model.support_vectors.len(),
                converged: fit.converged,
            };
            Ok((result, scored))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut scores = vec![f64::NAN; labels.len()];
    let mut fold_results = Vec::with_capacity(k);
    for (result, scored) in per_fold {
        for (i, s) in scored {
            scores[i] = s;
        }
        fold_results.push(result);
    }
    let fold_metrics: Vec<MetricSet> = fold_results.iter().map(|f| f.metrics.clone()).collect();
    Ok(RunResult {
        model_name: String::new(),
        run_index: 0,
        seed,
        metrics: MetricSet::mean(&fold_metrics).expect("k >= 2 folds"),
        folds: fold_results,
        scores,
        labels: labels.to_vec(),
    })
}
