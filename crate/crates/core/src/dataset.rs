//! Labeled sample manifests and deterministic stratified fold assignment.
//!
//! The manifest is a CSV file with the header
//! `sample_id,image_path,label,ear,patient_id`. Labels are `normal` or
//! `abnormal` (case-insensitive), ears are `left` or `right`. Images are never
//! scanned from disk to infer labels; the manifest is the only source.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_HEADER: [&str; 5] = ["sample_id", "image_path", "label", "ear", "patient_id"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("manifest header must be `{}`, found `{found}`", MANIFEST_HEADER.join(","))]
    Header { found: String },
    #[error("no samples")]
    Empty,
    #[error("duplicate sample_id `{0}`")]
    DuplicateSampleId(String),
    #[error("unknown label `{0}` (expected normal or abnormal)")]
    UnknownLabel(String),
    #[error("unknown ear `{0}` (expected left or right)")]
    UnknownEar(String),
    #[error("empty image_path for sample `{0}`")]
    EmptyImagePath(String),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("class {label} has {count} samples, fewer than k = {k}")]
    ClassTooSmall { label: Label, count: usize, k: usize },
    #[error("both classes are required, {0} is missing")]
    MissingClass(Label),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Abnormal];

    /// Signed SVM target; Abnormal is the positive class.
    pub fn sign(self) -> f64 {
        match self {
            Label::Normal => -1.0,
            Label::Abnormal => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        })
    }
}

impl FromStr for Label {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            _ => Err(DatasetError::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

impl fmt::Display for Ear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ear::Left => "left",
            Ear::Right => "right",
        })
    }
}

impl FromStr for Ear {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Ear::Left),
            "right" => Ok(Ear::Right),
            _ => Err(DatasetError::UnknownEar(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_path: PathBuf,
    pub label: Label,
    pub ear: Ear,
    pub patient_id: String,
}

/// Per-label sample counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub normal: usize,
    pub abnormal: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Normal => self.normal,
            Label::Abnormal => self.abnormal,
        }
    }

    fn bump(&mut self, label: Label) {
        match label {
            Label::Normal => self.normal += 1,
            Label::Abnormal => self.abnormal += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.normal + self.abnormal
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    samples: Vec<SampleRecord>,
    counts: ClassCounts,
}

impl DatasetManifest {
    /// Validates uniqueness of ids and non-empty paths, then computes counts.
    pub fn new(samples: Vec<SampleRecord>) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::with_capacity(samples.len());
        let mut counts = ClassCounts::default();
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(DatasetError::DuplicateSampleId(s.sample_id.clone()));
            }
            if s.image_path.as_os_str().is_empty() {
                return Err(DatasetError::EmptyImagePath(s.sample_id.clone()));
            }
            counts.bump(s.label);
        }
        Ok(Self { samples, counts })
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn counts(&self) -> ClassCounts {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Errors unless both classes have at least one sample.
    pub fn require_both_classes(&self) -> Result<(), DatasetError> {
        for label in Label::ALL {
            if self.counts.get(label) == 0 {
                return Err(DatasetError::MissingClass(label));
            }
        }
        Ok(())
    }
}

/// Loads and validates a manifest. Relative image paths are resolved against
/// the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    parse_manifest(&bytes, base)
}

pub fn parse_manifest(bytes: &[u8], base_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(DatasetError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| DatasetError::Parse { line: 1, message: e.to_string() })?
        .clone();
    if header.len() != MANIFEST_HEADER.len()
        || header.iter().zip(MANIFEST_HEADER).any(|(a, b)| !a.eq_ignore_ascii_case(b))
    {
        return Err(DatasetError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut samples = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != MANIFEST_HEADER.len() {
            return Err(DatasetError::Parse {
                line,
                message: format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()),
            });
        }
        let sample_id = row[0].to_string();
        if sample_id.is_empty() {
            return Err(DatasetError::Parse { line, message: "empty sample_id".into() });
        }
        let raw_path = &row[1];
        let image_path = if raw_path.is_empty() {
            PathBuf::new()
        } else {
            base_dir.join(raw_path)
        };
        samples.push(SampleRecord {
            label: row[2].parse()?,
            ear: row[3].parse()?,
            patient_id: row[4].to_string(),
            image_path,
            sample_id,
        });
    }
    DatasetManifest::new(samples)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Fold index of each sample, in manifest order.
    pub folds: Vec<usize>,
    /// sample_id -> fold index.
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Indices (in manifest order) of the samples in `fold`.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        indices_in_fold(&self.folds, fold)
    }
}

pub(crate) fn indices_in_fold(folds: &[usize], fold: usize) -> Vec<usize> {
    folds
        .iter()
        .enumerate()
        .filter_map(|(i, &f)| (f == fold).then_some(i))
        .collect()
}

fn check_fold_preconditions(labels: &[Label], k: usize) -> Result<(), DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidK(k));
    }
    for label in Label::ALL {
        let count = labels.iter().filter(|&&l| l == label).count();
        if count < k {
            return Err(DatasetError::ClassTooSmall { label, count, k });
        }
    }
    Ok(())
}

/// Stratified fold index per label.
///
/// Each class is shuffled independently with a ChaCha8 generator seeded by
/// `seed` (Normal first, then Abnormal, from one stream) and dealt
/// round-robin into `k` folds. The dealing offset carries over between
/// classes so the largest folds of each class do not pile up on fold 0.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
    check_fold_preconditions(labels, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; labels.len()];
    let mut offset = 0;
    for label in Label::ALL {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect();
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            folds[idx] = (offset + pos) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

/// Fold assignment that keeps every patient's samples in one fold.
///
/// Patients are shuffled, ordered by group size (largest first, stable), and
/// each is placed in the fold that minimises the squared deviation of the
/// per-class counts from their ideal `n_c / k`. The ±1 stratification bound
/// is not guaranteed in this mode.
pub fn grouped_stratified_folds(
    labels: &[Label],
    groups: &[&str],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, DatasetError> {
    check_fold_preconditions(labels, k)?;
    assert_eq!(labels.len(), groups.len(), "one group per label");

    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    let mut order: Vec<Vec<usize>> = by_group.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by_key(|members| std::cmp::Reverse(members.len()));

    let n_class = [
        labels.iter().filter(|&&l| l == Label::Normal).count() as f64,
        labels.iter().filter(|&&l| l == Label::Abnormal).count() as f64,
    ];
    let target = [n_class[0] / k as f64, n_class[1] / k as f64];
    let mut counts = vec![[0usize; 2]; k];
    let mut folds = vec![0usize; labels.len()];
    for members in order {
        let mut add = [0usize; 2];
        for &i in &members {
            add[labels[i].index()] += 1;
        }
        let cost = |c: &[usize; 2]| -> f64 {
            (0..2)
                .map(|j| {
                    let d = (c[j] + add[j]) as f64 - target[j];
                    d * d - (c[j] as f64 - target[j]).powi(2)
                })
                .sum()
        };
        let best = (0..k)
            .min_by(|&a, &b| cost(&counts[a]).total_cmp(&cost(&counts[b])).then(a.cmp(&b)))
            .expect("k >= 2");
        for j in 0..2 {
            counts[best][j] += add[j];
        }
        for &i in &members {
            folds[i] = best;
        }
    }
    Ok(folds)
}

/// Stratified k-fold assignment over a manifest.
pub fn stratified_kfold(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, DatasetError> {
    let folds = stratified_folds(&manifest.labels(), k, seed)?;
    Ok(assignment(manifest, k, seed, folds))
}

/// Like [`stratified_kfold`] but keeps samples sharing a `patient_id` together.
pub fn grouped_kfold(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, DatasetError> {
    let groups: Vec<&str> = manifest.samples.iter().map(|s| s.patient_id.as_str()).collect();
    let folds = grouped_stratified_folds(&manifest.labels(), &groups, k, seed)?;
    Ok(assignment(manifest, k, seed, folds))
}

fn assignment(manifest: &DatasetManifest, k: usize, seed: u64, folds: Vec<usize>) -> FoldAssignment {
    let fold_of = manifest
        .samples
        .iter()
        .zip(&folds)
        .map(|(s, &f)| (s.sample_id.clone(), f))
        .collect();
    FoldAssignment { k, seed, folds, fold_of }
}

/// Per-fold class counts, `[fold][label.index()]`.
pub fn fold_class_counts(labels: &[Label], folds: &[usize], k: usize) -> Vec<[usize; 2]> {
    let mut counts = vec![[0usize; 2]; k];
    for (l, &f) in labels.iter().zip(folds) {
        counts[f][l.index()] += 1;
    }
    counts
}

/// Count of samples per patient id, used for log output only.
pub fn patient_sizes(manifest: &DatasetManifest) -> HashMap<&str, usize> {
    let mut sizes = HashMap::new();
    for s in manifest.samples() {
        *sizes.entry(s.patient_id.as_str()).or_insert(0) += 1;
    }
    sizes
}
