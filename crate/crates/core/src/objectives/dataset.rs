//! Classification datasets, CSV ingestion and validation partitioning.
use crate::sampling::rng_from_seed;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("file is empty")]
    Empty,
    #[error("label column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset needs at least 2 classes")]
    OneClass,
    #[error("invalid partition: {0}")]
    Partition(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
    ) -> Result<Self, DatasetError> {
        if features.is_empty() {
            return Err(DatasetError::Empty);
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(DatasetError::Ragged {
                    row: i + 1,
                    expected: feature_names.len(),
                    found: row.len(),
                });
            }
        }
        let ds = Self {
            feature_names,
            features,
            labels,
        };
        if ds.class_counts().len() < 2 {
            return Err(DatasetError::OneClass);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for l in &self.labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
        counts
    }
}

/// Reads a comma-separated file with a header row. Data rows are numbered
/// from 1 in errors.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, label_column)
}

pub fn parse_csv(text: &str, label_column: &str) -> Result<Dataset, DatasetError> {
    if text.trim().is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingColumn(label_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(DatasetError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut values = Vec::with_capacity(feature_names.len());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(field.trim().to_owned());
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| DatasetError::Parse {
                row,
                column: header[j].clone(),
                value: field.to_owned(),
            })?;
            values.push(v);
        }
        features.push(values);
    }
    Dataset::new(feature_names, features, labels)
}

/// Two isotropic Gaussian classes in 2D, `separation` apart, with
/// optional pure-noise feature dimensions of unit scale appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub n: usize,
    pub sigma: f64,
    pub separation: f64,
    #[serde(default)]
    pub noise_dims: usize,
    pub seed: u64,
}

pub fn two_blobs(spec: &BlobsSpec) -> Result<Dataset, DatasetError> {
    let mut rng = rng_from_seed(spec.seed);
    let noise = Normal::new(0.0, spec.sigma.max(0.0))
        .map_err(|e| DatasetError::Partition(format!("bad sigma: {e}")))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let half = spec.separation / 2.0;
    let mut features = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % 2;
        let cx = if class == 0 { -half } else { half };
        let mut row = vec![cx + noise.sample(&mut rng), noise.sample(&mut rng)];
        row.extend((0..spec.noise_dims).map(|_| unit.sample(&mut rng)));
        features.push(row);
        labels.push(class.to_string());
    }
    let names = (0..2 + spec.noise_dims).map(|j| format!("f{j}")).collect();
    Dataset::new(names, features, labels)
}

fn default_fraction() -> f64 {
    0.30
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(default = "default_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            validation_fraction: default_fraction(),
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// False when stratification was requested but a class had fewer than
    /// two rows, forcing a plain random split.
    pub stratified: bool,
}

/// Splits row indices into train and validation sets. Per-class validation
/// quotas use largest-remainder allocation of `round(fraction * n)` rows.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Partition, DatasetError> {
    let f = spec.validation_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(DatasetError::Partition(format!(
            "validation fraction {f} outside (0, 1)"
        )));
    }
    let n = ds.len();
    let total = ((f * n as f64) + 0.5).floor() as usize;
    let total = total.clamp(1.min(n - 1), n - 1);
    let mut rng = rng_from_seed(spec.seed);

    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in ds.labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let can_stratify = spec.stratified && by_class.values().all(|rows| rows.len() >= 2);

    let mut validation = Vec::with_capacity(total);
    if can_stratify {
        let mut quotas: Vec<(usize, f64, &str)> = by_class
            .iter()
            .map(|(class, rows)| {
                let exact = total as f64 * rows.len() as f64 / n as f64;
                (exact.floor() as usize, exact - exact.floor(), *class)
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        // largest remainder first; ties go to the earlier class name
        order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
        for &i in order.iter().take(total - assigned) {
            quotas[i].0 += 1;
        }
        for (quota, _, class) in quotas {
            let mut rows = by_class[class].clone();
            rows.shuffle(&mut rng);
            validation.extend_from_slice(&rows[..quota.min(rows.len())]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        validation.extend_from_slice(&rows[..total]);
    }
    validation.sort_unstable();
    let mut in_val = vec![false; n];
    for &i in &validation {
        in_val[i] = true;
    }
    let train = (0..n).filter(|&i| !in_val[i]).collect();
    Ok(Partition {
        train,
        validation,
        stratified: can_stratify,
    })
}
