//! End-to-end orchestration: preprocess, extract (or reuse cached)
//! features, repeated cross-validation, aggregation and report files.
//!
//! Every model is processed independently; a failing model is recorded and
//! skipped without touching the outputs of the others.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::dataset::{self, DatasetManifest, Label};
use crate::evaluation::{
    aggregate, cross_validate_with_folds, render_auc_table, render_roc_svg, render_table, AggregateReport, MetricSet,
    RunResult, Table,
};
use crate::features::{self, extract_features, load_model, FeatureVector, ModelManifest};
use crate::preprocess::{self, InputTensor};
use crate::svm;

pub const RESULTS_FILE: &str = "results.json";
pub const RUN_LOG: &str = "run.log";
pub const RESULTS_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Features(#[from] features::FeatureError),
    #[error("sample `{sample_id}`: {source}")]
    Preprocess {
        sample_id: String,
        #[source]
        source: preprocess::PreprocessError,
    },
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error(transparent)]
    Svm(#[from] svm::SvmError),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: crate::evaluation::EvalError,
    },
    #[error("model name `{0}` appears in more than one manifest")]
    DuplicateModel(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("results file {path}: {message}")]
    Results { path: PathBuf, message: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Populate the feature cache only.
    Extract,
    /// Extract or reuse features, then cross-validate and write reports.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub metrics: MetricSet,
    pub non_converged_folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ModelOutcome {
    Ok {
        model_name: String,
        feature_dim: usize,
        report: Box<AggregateReport>,
        runs: Vec<RunSummary>,
    },
    Failed {
        model_name: String,
        error: String,
    },
}

impl ModelOutcome {
    pub fn model_name(&self) -> &str {
        match self {
            ModelOutcome::Ok { model_name, .. } | ModelOutcome::Failed { model_name, .. } => model_name,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, ModelOutcome::Ok { .. })
    }
}

/// Machine-readable results; byte-identical for identical config and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub format: u32,
    pub software: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub k: usize,
    pub repeats: usize,
    pub samples: usize,
    pub class_counts: dataset::ClassCounts,
    pub models: Vec<ModelOutcome>,
}

impl ResultsFile {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Results {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn reports(&self) -> Vec<AggregateReport> {
        self.models
            .iter()
            .filter_map(|m| match m {
                ModelOutcome::Ok { report, .. } => Some(AggregateReport::clone(report)),
                ModelOutcome::Failed { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub models: Vec<ModelOutcome>,
    pub results: Option<ResultsFile>,
}

impl PipelineOutcome {
    pub fn any_failed(&self) -> bool {
        self.models.iter().any(|m| !m.is_ok())
    }
}

pub fn software_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Cache file for one model; the key covers everything that determines the
/// extracted values except image contents.
pub fn cache_path(config: &RunConfig, model: &ModelManifest, manifest: &DatasetManifest) -> PathBuf {
    let mut key = String::new();
    write!(
        key,
        "{}|{}|{}|{:?}|{:?}|{:?}|{}|{:?}|{:?}|{}",
        model.weights_checksum,
        model.feature_dim,
        model.input_size,
        model.channel_means,
        model.channel_stds,
        model.layout,
        model.feature_output_name,
        config.crop.left,
        config.crop.right,
        config.backend,
    )
    .unwrap();
    for s in manifest.samples() {
        write!(key, "|{}={}:{}", s.sample_id, s.image_path.display(), s.ear).unwrap();
    }
    let digest = features::sha256_hex(key.as_bytes());
    config.cache_dir.join(format!("{}-{}.abrf", model.model_name, &digest[..16]))
}

fn preprocess_sample(
    config: &RunConfig,
    record: &dataset::SampleRecord,
    model: &ModelManifest,
) -> Result<InputTensor, PipelineError> {
    let wrap = |source| PipelineError::Preprocess { sample_id: record.sample_id.clone(), source };
    let mut image = preprocess::load_rgb(&record.image_path).map_err(wrap)?;
    if let Some(rect) = config.crop.for_ear(record.ear) {
        image = preprocess::crop(&image, rect).map_err(wrap)?;
    }
    preprocess::prepare_input(&image, model).map_err(wrap)
}

/// Features in manifest order, from the cache when it is valid, otherwise
/// by running the model (and refreshing the cache).
fn features_for_model(
    config: &RunConfig,
    manifest: &DatasetManifest,
    model: &ModelManifest,
    log: &mut String,
) -> Result<Vec<FeatureVector>, PipelineError> {
    let path = cache_path(config, model, manifest);
    if path.is_file() {
        match features::read_cache_for(&path, model) {
            Ok(cache)
                if cache.vectors.len() == manifest.len()
                    && cache.vectors.iter().zip(manifest.samples()).all(|(v, s)| v.sample_id == s.sample_id) =>
            {
                writeln!(log, "  features: cache hit {}", path.display()).unwrap();
                return Ok(cache.vectors);
            }
            Ok(_) => writeln!(log, "  features: stale cache {}, re-extracting", path.display()).unwrap(),
            Err(e) => writeln!(log, "  features: unusable cache ({e}), re-extracting").unwrap(),
        }
    }

    let handle = load_model(model, config.backend)?;
    let inputs: Vec<(String, InputTensor)> = manifest
        .samples()
        .par_iter()
        .map(|s| Ok((s.sample_id.clone(), preprocess_sample(config, s, model)?)))
        .collect::<Result<_, PipelineError>>()?;
    let vectors = extract_features(&handle, &inputs)?;
    std::fs::create_dir_all(&config.cache_dir).map_err(io_err(&config.cache_dir))?;
    let sum = features::write_cache(&path, &model.model_name, model.feature_dim, &vectors)?;
    writeln!(log, "  features: extracted {} vectors, cache {} checksum {sum:016x}", vectors.len(), path.display())
        .unwrap();
    Ok(vectors)
}

fn evaluate_model(
    config: &RunConfig,
    manifest: &DatasetManifest,
    model: &ModelManifest,
    vectors: &[FeatureVector],
    log: &mut String,
) -> Result<ModelOutcome, PipelineError> {
    let features: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let labels: Vec<Label> = manifest.labels();

    let runs: Vec<RunResult> = (0..config.repeats)
        .into_par_iter()
        .map(|run| {
            let seed = config.master_seed.wrapping_add(run as u64);
            let folds = if config.group_by_patient {
                dataset::grouped_kfold(manifest, config.k, seed)?
            } else {
                dataset::stratified_kfold(manifest, config.k, seed)?
            };
            let mut result = cross_validate_with_folds(&features, &labels, &config.svm, &folds.folds, config.k, seed)
                .map_err(|source| PipelineError::Run { run, source })?;
            result.model_name = model.model_name.clone();
            result.run_index = run;
            Ok(result)
        })
        .collect::<Result<_, PipelineError>>()?;

    let report = if runs.len() >= 2 {
        aggregate(&runs)?
    } else {
        // a single run has no spread; duplicate it so std reads as 0
        aggregate(&[runs[0].clone(), runs[0].clone()]).map(|mut r| {
            r.runs = 1;
            r
        })?
    };
    let non_converged: usize = runs.iter().flat_map(|r| &r.folds).filter(|f| !f.converged).count();
    writeln!(
        log,
        "  evaluation: {} runs (seeds {}..={}), mean accuracy {:.4}, AUC {:.4}, non-converged fits {non_converged}",
        runs.len(),
        config.master_seed,
        config.master_seed.wrapping_add(runs.len() as u64 - 1),
        report.accuracy.mean,
        report.auc
    )
    .unwrap();

    let targets = svm::labels_to_targets(&labels);
    let full = svm::train_smo(&features, &targets, &config.svm)?;
    let models_dir = config.output_dir.join("models");
    std::fs::create_dir_all(&models_dir).map_err(io_err(&models_dir))?;
    svm::save_model(&full.model, &models_dir.join(format!("{}.svm", model.model_name)))?;

    Ok(ModelOutcome::Ok {
        model_name: model.model_name.clone(),
        feature_dim: model.feature_dim,
        runs: runs
            .iter()
            .map(|r| RunSummary {
                run_index: r.run_index,
                seed: r.seed,
                metrics: r.metrics.clone(),
                non_converged_folds: r.folds.iter().filter(|f| !f.converged).count(),
            })
            .collect(),
        report: Box::new(report),
    })
}

fn fallback_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Runs `stage` for every model in the config inside a worker pool of
/// `config.jobs` threads.
pub fn run_pipeline(config: &RunConfig, stage: Stage) -> Result<PipelineOutcome, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(|| run_in_pool(config, stage))
}

fn run_in_pool(config: &RunConfig, stage: Stage) -> Result<PipelineOutcome, PipelineError> {
    let manifest = dataset::load_manifest(&config.manifest_path)?;
    manifest.require_both_classes()?;
    std::fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let mut log = String::new();
    writeln!(log, "software: {}", software_version()).unwrap();
    writeln!(log, "config_hash: {}", config.hash()).unwrap();
    writeln!(log, "master_seed: {}", config.master_seed).unwrap();
    writeln!(log, "k: {} repeats: {} backend: {}", config.k, config.repeats, config.backend).unwrap();
    let counts = manifest.counts();
    writeln!(
        log,
        "samples: {} (normal {}, abnormal {}, patients {})",
        manifest.len(),
        counts.normal,
        counts.abnormal,
        dataset::patient_sizes(&manifest).len()
    )
    .unwrap();

    let mut outcomes = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for path in &config.model_manifest_paths {
        writeln!(log, "model manifest {}", path.display()).unwrap();
        let result = ModelManifest::load(path).map_err(PipelineError::from).and_then(|model| {
            if !seen.insert(model.model_name.clone()) {
                return Err(PipelineError::DuplicateModel(model.model_name.clone()));
            }
            let vectors = features_for_model(config, &manifest, &model, &mut log)?;
            match stage {
                Stage::Extract => Ok(None),
                Stage::Evaluate => evaluate_model(config, &manifest, &model, &vectors, &mut log).map(Some),
            }
            .map(|o| (model.model_name.clone(), o))
        });
        match result {
            Ok((name, outcome)) => {
                writeln!(log, "  {name}: ok").unwrap();
                if let Some(o) = outcome {
                    outcomes.push(o);
                }
            }
            Err(e) => {
                let name = ModelManifest::load(path).map(|m| m.model_name).unwrap_or_else(|_| fallback_name(path));
                log::error!("model {name} failed: {e}");
                writeln!(log, "  {name}: FAILED: {e}").unwrap();
                outcomes.push(ModelOutcome::Failed { model_name: name, error: e.to_string() });
            }
        }
    }

    let results = match stage {
        Stage::Extract => None,
        Stage::Evaluate => {
            let results = ResultsFile {
                format: RESULTS_FORMAT,
                software: software_version(),
                config_hash: config.hash(),
                master_seed: config.master_seed,
                k: config.k,
                repeats: config.repeats,
                samples: manifest.len(),
                class_counts: counts,
                models: outcomes.clone(),
            };
            let path = config.output_dir.join(RESULTS_FILE);
            let json = serde_json::to_string_pretty(&results).expect("results serialize") + "\n";
            write_atomic(&path, json.as_bytes())?;
            write_reports(&results, &config.output_dir, config.roc_plot)?;
            Some(results)
        }
    };

    let log_path = config.output_dir.join(RUN_LOG);
    std::fs::write(&log_path, &log).map_err(io_err(&log_path))?;
    Ok(PipelineOutcome { models: outcomes, results })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes the three tables, the AUC table, one ROC point file per model and
/// optionally an SVG with all ROC curves.
pub fn write_reports(results: &ResultsFile, output_dir: &Path, roc_plot: bool) -> Result<(), PipelineError> {
    let reports = results.reports();
    std::fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    for table in Table::ALL {
        let path = output_dir.join(table.file_name());
        std::fs::write(&path, render_table(table, &reports)).map_err(io_err(&path))?;
    }
    let path = output_dir.join("table_auc.csv");
    std::fs::write(&path, render_auc_table(&reports)).map_err(io_err(&path))?;
    let roc_dir = output_dir.join("roc");
    std::fs::create_dir_all(&roc_dir).map_err(io_err(&roc_dir))?;
    for r in &reports {
        let path = roc_dir.join(format!("{}.csv", r.model_name));
        std::fs::write(&path, r.roc.to_csv()).map_err(io_err(&path))?;
    }
    if roc_plot {
        let path = output_dir.join("roc.svg");
        std::fs::write(&path, render_roc_svg(&reports)).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Re-renders every report file from an existing `results.json`.
pub fn rerender_reports(config: &RunConfig) -> Result<ResultsFile, PipelineError> {
    let results = ResultsFile::load(&config.output_dir.join(RESULTS_FILE))?;
    write_reports(&results, &config.output_dir, config.roc_plot)?;
    Ok(results)
}
