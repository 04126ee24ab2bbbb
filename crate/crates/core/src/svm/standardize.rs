use serde::{Deserialize, Serialize};

use super::SvmError;

pub const STD_FLOOR: f64 = 1e-12;

/// Per-column z-scoring fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Sample standard deviations, floored at [`STD_FLOOR`].
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { means: vec![0.0; dim], stds: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        if x.len() != self.dim() {
            return Err(SvmError::LengthMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<Standardizer, SvmError> {
    if rows.len() < 2 {
        return Err(SvmError::TooFewRows(rows.len()));
    }
    let dim = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(SvmError::LengthMismatch { expected: dim, got: bad.len() });
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; dim];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut ss = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in ss.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds = ss.into_iter().map(|s| (s / (n - 1.0)).sqrt().max(STD_FLOOR)).collect();
    Ok(Standardizer { means, stds })
}
