//! Soft-margin binary SVM trained by sequential minimal optimization.

mod io;
mod kernel;
mod smo;
mod standardize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use kernel::{kernel_eval, KernelSpec};
pub use standardize::{fit_standardizer, Standardizer, STD_FLOOR};

/// Multipliers below this are dropped from the trained model.
pub const PRUNE_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("labels must be -1 or +1, found {0}")]
    InvalidLabel(f64),
    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("{0} rows but {1} labels")]
    RowLabelMismatch(usize, usize),
    #[error("non-finite value in training row {0}")]
    NonFinite(usize),
    #[error("invalid SVM parameters: {0}")]
    InvalidParams(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// RBF bandwidth before resolution against the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    /// `"scale"`: `1 / (dim * mean per-feature variance)` of the standardized rows.
    Named(GammaHeuristic),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaHeuristic {
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: Gamma },
}

impl Default for KernelChoice {
    fn default() -> Self {
        KernelChoice::Rbf { gamma: Gamma::Named(GammaHeuristic::Scale) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    #[default]
    Off,
    /// `C_i = C * n / (2 * n_class(i))`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelChoice,
    /// Stopping threshold on the maximal KKT violation gap.
    pub tolerance: f64,
    /// Budget in passes of `n` pair updates each; `None` means `10 * n` passes.
    pub max_passes: Option<usize>,
    pub class_weighting: ClassWeighting,
    /// Z-score features on the training rows before solving.
    pub standardize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel: KernelChoice::default(),
            tolerance: 1e-3,
            max_passes: None,
            class_weighting: ClassWeighting::Off,
            standardize: true,
        }
    }
}

impl SvmParams {
    pub fn linear(c: f64) -> Self {
        Self { c, kernel: KernelChoice::Linear, ..Self::default() }
    }

    pub fn rbf(c: f64, gamma: f64) -> Self {
        Self { c, kernel: KernelChoice::Rbf { gamma: Gamma::Value(gamma) }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvmError::InvalidParams(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(SvmError::InvalidParams(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_passes == Some(0) {
            return Err(SvmError::InvalidParams("max_passes must be at least 1".into()));
        }
        if let KernelChoice::Rbf { gamma: Gamma::Value(g) } = self.kernel {
            KernelSpec::rbf(g)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSvm {
    /// Standardized support vectors, one per row.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub standardizer: Standardizer,
}

impl TrainedSvm {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// `f(x) = sum_i coeff_i K(sv_i, z(x)) + b` with `z` the fitted standardizer.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64, SvmError> {
        let z = self.standardizer.apply(x)?;
        Ok(self.decision_standardized(&z))
    }

    fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, c)| c * self.kernel.apply(sv, z))
            .sum::<f64>()
            + self.bias
    }

    /// Abnormal when `f(x) > 0`; a zero score is Normal.
    pub fn predict(&self, x: &[f64]) -> Result<Label, SvmError> {
        Ok(label_for_score(self.decision_function(x)?))
    }
}

pub fn label_for_score(score: f64) -> Label {
    if score > 0.0 {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

/// A trained model plus the full solver state for auditing.
#[derive(Debug, Clone)]
pub struct SvmFit {
    pub model: TrainedSvm,
    /// Multiplier of every training row, before pruning.
    pub alphas: Vec<f64>,
    /// Per-row box bound `C_i`.
    pub upper_bounds: Vec<f64>,
    /// Decision values on the training rows (unpruned model).
    pub training_scores: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktViolation {
    pub index: usize,
    pub alpha: f64,
    pub margin: f64,
}

impl SvmFit {
    /// Rows whose `y f(x)` breaks the KKT condition for their multiplier by
    /// more than `tol`: `a = 0 => y f >= 1 - tol`, `0 < a < C => |y f - 1| <= tol`,
    /// `a = C => y f <= 1 + tol`.
    pub fn kkt_violations(&self, y: &[f64], tol: f64) -> Vec<KktViolation> {
        let mut out = Vec::new();
        for (i, (&a, &yi)) in self.alphas.iter().zip(y).enumerate() {
            let margin = yi * self.training_scores[i];
            let c = self.upper_bounds[i];
            let ok = if a <= 0.0 {
                margin >= 1.0 - tol
            } else if a >= c {
                margin <= 1.0 + tol
            } else {
                (margin - 1.0).abs() <= tol
            };
            if !ok {
                out.push(KktViolation { index: i, alpha: a, margin });
            }
        }
        out
    }

    /// `|sum a_i y_i|`.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.alphas.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs()
    }
}

pub fn labels_to_targets(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

fn validate_inputs(rows: &[Vec<f64>], y: &[f64]) -> Result<usize, SvmError> {
    if rows.len() != y.len() {
        return Err(SvmError::RowLabelMismatch(rows.len(), y.len()));
    }
    if rows.len() < 2 {
        return Err(SvmError::TooFewRows(rows.len()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidLabel(bad));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(SvmError::SingleClass);
    }
    let dim = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(SvmError::LengthMismatch { expected: dim, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite(i));
        }
    }
    Ok(dim)
}

fn resolve_kernel(choice: KernelChoice, z: &[Vec<f64>]) -> Result<KernelSpec, SvmError> {
    match choice {
        KernelChoice::Linear => Ok(KernelSpec::Linear),
        KernelChoice::Rbf { gamma: Gamma::Value(g) } => KernelSpec::rbf(g),
        KernelChoice::Rbf { gamma: Gamma::Named(GammaHeuristic::Scale) } => {
            KernelSpec::rbf(scale_gamma(z))
        }
    }
}

/// `1 / (dim * mean per-feature population variance)`; 1.0 when every
/// feature is constant.
pub fn scale_gamma(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 || rows.is_empty() {
        return 1.0;
    }
    let mut total_var = 0.0;
    for j in 0..dim {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        total_var += rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
    }
    let mean_var = total_var / dim as f64;
    if mean_var > 0.0 {
        1.0 / (dim as f64 * mean_var)
    } else {
        1.0
    }
}

/// Trains on `rows` with targets in {-1, +1}.
///
/// Non-convergence within the iteration budget is not an error: the best
/// iterate is returned with `converged = false` and a warning is logged.
pub fn train_smo(rows: &[Vec<f64>], y: &[f64], params: &SvmParams) -> Result<SvmFit, SvmError> {
    params.validate()?;
    let dim = validate_inputs(rows, y)?;
    let n = rows.len();

    let standardizer = if params.standardize {
        fit_standardizer(rows)?
    } else {
        Standardizer::identity(dim)
    };
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| standardizer.apply(r))
        .collect::<Result<_, _>>()?;
    let kernel = resolve_kernel(params.kernel, &z)?;
    let gram = smo::KernelMatrix::new(n, |i, j| kernel.apply(&z[i], &z[j]));

    let upper_bounds: Vec<f64> = match params.class_weighting {
        ClassWeighting::Off => vec![params.c; n],
        ClassWeighting::Balanced => {
            let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
            let n_neg = n as f64 - n_pos;
            y.iter()
                .map(|&v| params.c * n as f64 / (2.0 * if v > 0.0 { n_pos } else { n_neg }))
                .collect()
        }
    };

    let budget = params.max_passes.unwrap_or(10 * n).saturating_mul(n);
    let sol = smo::solve(&gram, y, &upper_bounds, params.tolerance, budget);
    if !sol.converged {
        log::warn!(
            "SMO stopped after {} iterations with violation gap {:.3e} > tolerance {:.1e}",
            sol.iterations,
            sol.gap,
            params.tolerance
        );
    }

    let training_scores = (0..n)
        .map(|t| {
            let row = gram.row(t);
            (0..n).map(|s| sol.alphas[s] * y[s] * row[s]).sum::<f64>() + sol.bias
        })
        .collect();
    let objective = smo::dual_objective(&gram, y, &sol.alphas);

    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for (i, &a) in sol.alphas.iter().enumerate() {
        if a >= PRUNE_THRESHOLD {
            support_vectors.push(z[i].clone());
            dual_coeffs.push(a * y[i]);
        }
    }

    Ok(SvmFit {
        model: TrainedSvm { support_vectors, dual_coeffs, bias: sol.bias, kernel, standardizer },
        alphas: sol.alphas,
        upper_bounds,
        training_scores,
        objective,
        iterations: sol.iterations,
        converged: sol.converged,
        tolerance: params.tolerance,
    })
}
