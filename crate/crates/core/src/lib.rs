//! Transfer-learning classification of auditory brainstem response (ABR)
//! report images.
//!
//! Pretrained CNNs act as fixed feature extractors; a soft-margin SVM
//! trained by sequential minimal optimization separates normal from
//! abnormal hearing. Models are compared with repeated stratified k-fold
//! cross-validation and summarised as max / mean / std tables plus ROC curves.

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod svm;
pub mod synthetic;

pub use config::{ConfigError, RunConfig};
pub use dataset::{DatasetManifest, Label, SampleRecord};
pub use pipeline::{run_pipeline, PipelineError, PipelineOutcome, Stage};
