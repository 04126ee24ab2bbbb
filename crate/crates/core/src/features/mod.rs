//! Pretrained CNNs as fixed feature extractors.
//!
//! A [`ModelManifest`] binds an exported weights file to its input size,
//! normalization constants, feature tap and feature dimension. Inference runs
//! through an [`InferenceBackend`]: the ONNX runtime backend for real models,
//! or the deterministic mock backend used throughout the test suite.

mod cache;
mod mock;
#[cfg(feature = "onnx")]
mod onnx;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::preprocess::InputTensor;

pub use cache::{read_cache, read_cache_for, write_cache, FeatureCache, CACHE_MAGIC};
pub use mock::{mock_infer, MockBackend};
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("weights file {path} checksum mismatch: manifest says {expected}, file hashes to {actual}")]
    WeightsChecksum { path: PathBuf, expected: String, actual: String },
    #[error("model `{model}` declares feature_dim {declared} but inference emits {actual}")]
    FeatureDim { model: String, declared: usize, actual: usize },
    #[error("sample `{sample_id}`: input tensor is {got_h}x{got_w}, model `{model}` expects {expected}x{expected}")]
    InputSize { sample_id: String, model: String, expected: u32, got_h: u32, got_w: u32 },
    #[error("sample `{sample_id}`: {message}")]
    Inference { sample_id: String, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("backend `{0}` is not available in this build")]
    BackendUnavailable(String),
    #[error("feature cache {path}: checksum mismatch")]
    CacheChecksum { path: PathBuf },
    #[error("feature cache {path}: {message}")]
    CacheFormat { path: PathBuf, message: String },
    #[error("feature cache {path} holds {found}, expected {expected}")]
    CacheMismatch { path: PathBuf, expected: String, found: String },
}

/// Memory order of the three image channels in an input tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorLayout {
    #[default]
    Nchw = 0,
    Nhwc = 1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub model_name: String,
    pub weights_path: PathBuf,
    /// Lowercase hex SHA-256 of the weights file.
    pub weights_checksum: String,
    pub input_size: u32,
    pub channel_means: [f64; 3],
    pub channel_stds: [f64; 3],
    /// Graph output used as the feature tap (pooled penultimate activation).
    pub feature_output_name: String,
    pub feature_dim: usize,
    #[serde(default)]
    pub layout: TensorLayout,
}

impl ModelManifest {
    /// Reads a `key = value` manifest file. `weights_path` is resolved
    /// against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FeatureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: ModelManifest = toml::from_str(&text).map_err(|e| FeatureError::Manifest {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        if manifest.weights_path.is_relative() {
            if let Some(dir) = path.parent() {
                manifest.weights_path = dir.join(&manifest.weights_path);
            }
        }
        manifest.validate().map_err(|message| FeatureError::Manifest {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model_name.is_empty() || self.model_name.contains([',', '\n', '/', '\\']) {
            return Err(format!("model_name `{}` must be non-empty without `,`, `/` or newlines", self.model_name));
        }
        if self.feature_dim == 0 {
            return Err("feature_dim must be positive".into());
        }
        if self.input_size == 0 {
            return Err("input_size must be positive".into());
        }
        if self.channel_stds.iter().any(|s| !s.is_finite() || *s <= 0.0)
            || self.channel_means.iter().any(|m| !m.is_finite())
        {
            return Err("channel_means must be finite and channel_stds positive".into());
        }
        let hex_ok = self.weights_checksum.len() == 64
            && self.weights_checksum.bytes().all(|b| b.is_ascii_hexdigit());
        if !hex_ok {
            return Err("weights_checksum must be a 64-digit hex SHA-256".into());
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, FeatureError> {
    let bytes = std::fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sample_id: String,
    pub model_name: String,
    pub values: Vec<f64>,
}

/// A loaded model. Implementations must be deterministic and read-only after
/// construction so one handle can serve parallel inferences.
pub trait InferenceBackend: Send + Sync {
    fn infer(&self, tensor: &InputTensor) -> Result<Vec<f64>, FeatureError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// ONNX graph executed by the tract runtime.
    #[default]
    Interchange,
    Mock,
}

impl BackendKind {
    pub const NAMES: [&'static str; 2] = ["interchange", "mock"];
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Interchange => "interchange",
            BackendKind::Mock => "mock",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interchange" | "onnx" => Ok(BackendKind::Interchange),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!(
                "unknown backend `{other}`, valid values: {}",
                BackendKind::NAMES.join(", ")
            )),
        }
    }
}

pub struct ModelHandle {
    manifest: ModelManifest,
    backend: Box<dyn InferenceBackend>,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle").field("model", &self.manifest.model_name).finish()
    }
}

impl ModelHandle {
    /// Wraps an arbitrary backend and runs the zero-tensor probe.
    pub fn with_backend(
        manifest: ModelManifest,
        backend: Box<dyn InferenceBackend>,
    ) -> Result<Self, FeatureError> {
        let probe = InputTensor::zeros(manifest.input_size, manifest.layout);
        let out = backend.infer(&probe)?;
        if out.len() != manifest.feature_dim {
            return Err(FeatureError::FeatureDim {
                model: manifest.model_name.clone(),
                declared: manifest.feature_dim,
                actual: out.len(),
            });
        }
        Ok(Self { manifest, backend })
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    pub fn infer(&self, tensor: &InputTensor) -> Result<Vec<f64>, FeatureError> {
        self.backend.infer(tensor)
    }
}

/// Verifies the weights checksum, loads the backend and checks that a probe
/// inference on a zero tensor yields `feature_dim` values.
pub fn load_model(manifest: &ModelManifest, kind: BackendKind) -> Result<ModelHandle, FeatureError> {
    let actual = file_sha256(&manifest.weights_path)?;
    if !actual.eq_ignore_ascii_case(&manifest.weights_checksum) {
        return Err(FeatureError::WeightsChecksum {
            path: manifest.weights_path.clone(),
            expected: manifest.weights_checksum.clone(),
            actual,
        });
    }
    let backend: Box<dyn InferenceBackend> = match kind {
        BackendKind::Mock => Box::new(MockBackend::new(manifest.feature_dim)),
        #[cfg(feature = "onnx")]
        BackendKind::Interchange => Box::new(OnnxBackend::load(manifest)?),
        #[cfg(not(feature = "onnx"))]
        BackendKind::Interchange => return Err(FeatureError::BackendUnavailable(kind.to_string())),
    };
    ModelHandle::with_backend(manifest.clone(), backend)
}

/// Runs every input through the model, in parallel, preserving input order.
pub fn extract_features(
    handle: &ModelHandle,
    inputs: &[(String, InputTensor)],
) -> Result<Vec<FeatureVector>, FeatureError> {
    let manifest = handle.manifest();
    inputs
        .par_iter()
        .map(|(sample_id, tensor)| {
            let size = manifest.input_size;
            if tensor.height != size || tensor.width != size || tensor.layout != manifest.layout {
                return Err(FeatureError::InputSize {
                    sample_id: sample_id.clone(),
                    model: manifest.model_name.clone(),
                    expected: size,
                    got_h: tensor.height,
                    got_w: tensor.width,
                });
            }
            let values = handle.infer(tensor).map_err(|e| match e {
                FeatureError::Inference { .. } => e,
                other => FeatureError::Inference {
                    sample_id: sample_id.clone(),
                    message: other.to_string(),
                },
            })?;
            if values.len() != manifest.feature_dim {
                return Err(FeatureError::FeatureDim {
                    model: manifest.model_name.clone(),
                    declared: manifest.feature_dim,
                    actual: values.len(),
                });
            }
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::Inference {
                    sample_id: sample_id.clone(),
                    message: format!("non-finite feature at index {pos}"),
                });
            }
            Ok(FeatureVector {
                sample_id: sample_id.clone(),
                model_name: manifest.model_name.clone(),
                values,
            })
        })
        .collect()
}
