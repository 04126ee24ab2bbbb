//! Run configuration file (TOML).
//!
//! ```toml
//! manifest = "samples.csv"
//! models = ["models/resnet50.manifest"]
//! output_dir = "results"
//! # optional
//! cache_dir = "cache"            # default: <output_dir>/cache
//! backend = "interchange"        # or "mock"
//! k = 5
//! repeats = 100
//! seed = 0
//! jobs = 0                       # 0 = logical cores
//! group_by_patient = false
//! roc_plot = true
//!
//! [crop.left]
//! x = 0
//! y = 0
//! width = 2350
//! height = 1950
//!
//! [svm]
//! c = 1.0
//! kernel = "rbf"                 # or "linear"
//! gamma = "scale"                # or a positive number
//! tolerance = 1e-3
//! class_weighting = "off"        # or "balanced"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Ear;
use crate::features::BackendKind;
use crate::preprocess::CropRect;
use crate::svm::{ClassWeighting, Gamma, GammaHeuristic, KernelChoice, SvmParams};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_REPEATS: usize = 100;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    manifest: PathBuf,
    models: OneOrMany,
    output_dir: PathBuf,
    cache_dir: Option<PathBuf>,
    backend: Option<String>,
    k: Option<i64>,
    repeats: Option<i64>,
    seed: Option<u64>,
    jobs: Option<usize>,
    #[serde(default)]
    group_by_patient: bool,
    roc_plot: Option<bool>,
    #[serde(default)]
    crop: RawCrop,
    #[serde(default)]
    svm: RawSvm,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrop {
    left: Option<CropRect>,
    right: Option<CropRect>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSvm {
    c: Option<f64>,
    kernel: Option<String>,
    gamma: Option<Gamma>,
    tolerance: Option<f64>,
    max_passes: Option<usize>,
    class_weighting: Option<String>,
    standardize: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    pub left: Option<CropRect>,
    pub right: Option<CropRect>,
}

impl CropConfig {
    pub fn for_ear(&self, ear: Ear) -> Option<CropRect> {
        match ear {
            Ear::Left => self.left,
            Ear::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub model_manifest_paths: Vec<PathBuf>,
    pub crop: CropConfig,
    pub k: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub svm: SvmParams,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub backend: BackendKind,
    /// Worker threads; 0 means one per logical core.
    pub jobs: usize,
    pub group_by_patient: bool,
    pub roc_plot: bool,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p
    }
}

fn parse_svm(raw: RawSvm) -> Result<SvmParams, ConfigError> {
    let defaults = SvmParams::default();
    let kernel = match raw.kernel.as_deref().unwrap_or("rbf") {
        "linear" => {
            if raw.gamma.is_some() {
                return Err(ConfigError::Invalid("svm.gamma only applies to the rbf kernel".into()));
            }
            KernelChoice::Linear
        }
        "rbf" => KernelChoice::Rbf { gamma: raw.gamma.unwrap_or(Gamma::Named(GammaHeuristic::Scale)) },
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown svm.kernel `{other}`, valid values: linear, rbf"
            )))
        }
    };
    let class_weighting = match raw.class_weighting.as_deref().unwrap_or("off") {
        "off" => ClassWeighting::Off,
        "balanced" => ClassWeighting::Balanced,
        other => {
            return Err(ConfigError::Invalid(format!(
                "unknown svm.class_weighting `{other}`, valid values: off, balanced"
            )))
        }
    };
    let params = SvmParams {
        c: raw.c.unwrap_or(defaults.c),
        kernel,
        tolerance: raw.tolerance.unwrap_or(defaults.tolerance),
        max_passes: raw.max_passes.or(defaults.max_passes),
        class_weighting,
        standardize: raw.standardize.unwrap_or(defaults.standardize),
    };
    params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(params)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
        Self::parse(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Parses and validates config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.message().to_string(),
        })?;

        let backend = match raw.backend {
            Some(name) => name.parse::<BackendKind>().map_err(ConfigError::Invalid)?,
            None => BackendKind::default(),
        };
        let k = raw.k.unwrap_or(DEFAULT_K as i64);
        let repeats = raw.repeats.unwrap_or(DEFAULT_REPEATS as i64);
        let models = match raw.models {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        };
        let output_dir = resolve(base, raw.output_dir);
        let config = RunConfig {
            manifest_path: resolve(base, raw.manifest),
            model_manifest_paths: models.into_iter().map(|p| resolve(base, p)).collect(),
            crop: CropConfig { left: raw.crop.left, right: raw.crop.right },
            k: usize::try_from(k).map_err(|_| ConfigError::Invalid(format!("k must be at least 2, got {k}")))?,
            repeats: usize::try_from(repeats)
                .map_err(|_| ConfigError::Invalid(format!("repeats must be at least 1, got {repeats}")))?,
            master_seed: raw.seed.unwrap_or(0),
            svm: parse_svm(raw.svm)?,
            cache_dir: raw.cache_dir.map(|p| resolve(base, p)).unwrap_or_else(|| output_dir.join("cache")),
            output_dir,
            backend,
            jobs: raw.jobs.unwrap_or(0),
            group_by_patient: raw.group_by_patient,
            roc_plot: raw.roc_plot.unwrap_or(true),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k < 2 {
            return Err(ConfigError::Invalid(format!("k must be at least 2, got {}", self.k)));
        }
        if self.repeats < 1 {
            return Err(ConfigError::Invalid(format!("repeats must be at least 1, got {}", self.repeats)));
        }
        if self.model_manifest_paths.is_empty() {
            return Err(ConfigError::Invalid("at least one model manifest is required".into()));
        }
        if !self.manifest_path.is_file() {
            return Err(ConfigError::Invalid(format!(
                "manifest {} is not a readable file",
                self.manifest_path.display()
            )));
        }
        for p in &self.model_manifest_paths {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!("model manifest {} is not a readable file", p.display())));
            }
        }
        for (ear, rect) in [("left", self.crop.left), ("right", self.crop.right)] {
            if let Some(r) = rect {
                if r.width == 0 || r.height == 0 {
                    return Err(ConfigError::Invalid(format!("crop.{ear} must have positive width and height")));
                }
            }
        }
        self.svm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// SHA-256 of the effective configuration, ignoring the worker count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.jobs = 0;
        crate::features::sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}
