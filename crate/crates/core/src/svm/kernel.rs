use serde::{Deserialize, Serialize};

use super::SvmError;

/// A fully resolved kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self, SvmError> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(KernelSpec::Rbf { gamma })
        } else {
            Err(SvmError::InvalidParams(format!("rbf gamma must be positive, got {gamma}")))
        }
    }

    /// Kernel value without the length check; callers guarantee equal lengths.
    pub(crate) fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * sq).exp()
            }
        }
    }
}

/// `Linear`: dot product. `Rbf`: `exp(-gamma * |u - v|^2)`.
pub fn kernel_eval(u: &[f64], v: &[f64], spec: &KernelSpec) -> Result<f64, SvmError> {
    if u.len() != v.len() {
        return Err(SvmError::LengthMismatch { expected: u.len(), got: v.len() });
    }
    Ok(spec.apply(u, v))
}
