//! Tabular datasets, ingestion and reproducible split plans.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UqError};

/// Id-indexed feature matrix with one real-valued target per row.
///
/// Rows are stored row-major; `features[i][j]` is descriptor `feature_names[j]`
/// of record `ids[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    #[serde(default)]
    pub unit: String,
}

/// A dataset together with the number of rows rejected during ingestion.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

impl Dataset {
    /// Builds a dataset and checks its shape invariants.
    pub fn new(
        ids: Vec<String>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            ids,
            feature_names,
            features,
            targets,
            unit: unit.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor with generated ids (`"0"`, `"1"`, …) and
    /// feature names (`"x0"`, `"x1"`, …).
    pub fn from_rows(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        let ids = (0..targets.len()).map(|i| i.to_string()).collect();
        let names = (0..d).map(|j| format!("x{j}")).collect();
        Dataset::new(ids, names, features, targets, "")
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.targets.len();
        let d = self.feature_names.len();
        if self.ids.len() != n || self.features.len() != n {
            return Err(UqError::MalformedDataset(format!(
                "{} ids, {} feature rows and {} targets",
                self.ids.len(),
                self.features.len(),
                n
            )));
        }
        if let Some((i, row)) = self.features.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(UqError::MalformedDataset(format!(
                "row {i} has {} values, expected {d}",
                row.len()
            )));
        }
        let mut seen = HashSet::with_capacity(d);
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) {
                return Err(UqError::MalformedDataset(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        Ok(())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            unit: self.unit.clone(),
        }
    }

    /// Keeps only the named feature columns, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let cols = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| UqError::MissingColumn(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(
            self.ids.clone(),
            names.to_vec(),
            self.features
                .iter()
                .map(|row| cols.iter().map(|&j| row[j]).collect())
                .collect(),
            self.targets.clone(),
            self.unit.clone(),
        )
    }

    /// Drops rows containing NaN or infinite values; returns how many went.
    pub fn drop_non_finite(&mut self) -> usize {
        let keep: Vec<bool> = self
            .features
            .iter()
            .zip(&self.targets)
            .map(|(row, y)| y.is_finite() && row.iter().all(|v| v.is_finite()))
            .collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        if dropped > 0 {
            let mut k = keep.iter();
            self.ids.retain(|_| *k.next().unwrap());
            let mut k = keep.iter();
            self.features.retain(|_| *k.next().unwrap());
            let mut k = keep.iter();
            self.targets.retain(|_| *k.next().unwrap());
        }
        dropped
    }

    /// Canonical CSV rendering (`id,<features…>,target`), shortest
    /// round-trip float formatting, `\n` line endings.
    pub fn canonical_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",target\n");
        for ((id, row), y) in self.ids.iter().zip(&self.features).zip(&self.targets) {
            out.push_str(id);
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{y:?}");
        }
        out
    }

    /// SHA-256 of [`Dataset::canonical_csv`], hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_csv().as_bytes()))
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    let t = raw.trim();
    if t.is_empty() {
        return Some(f64::NAN);
    }
    t.parse::<f64>().ok()
}

/// Loads a dataset from CSV, or from JSON when the path ends in `.json`.
///
/// In CSV mode every column other than `id_column` and `target_column` is a
/// numeric feature. Empty cells, `NaN` and infinities mark the row for
/// removal; anything else that does not parse is an error. Reported row
/// numbers are 1-based and exclude the header.
pub fn load_dataset(path: &Path, target_column: &str, id_column: &str) -> Result<Loaded> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut dataset = if is_json {
        let text = std::fs::read_to_string(path)?;
        let ds: Dataset = serde_json::from_str(&text)?;
        ds.validate()?;
        ds
    } else {
        let file = std::fs::File::open(path)?;
        let reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        read_csv(reader, target_column, id_column)?
    };
    let dropped_rows = dataset.drop_non_finite();
    if dataset.n_samples() == 0 {
        return Err(UqError::EmptyDataset);
    }
    Ok(Loaded {
        dataset,
        dropped_rows,
    })
}

fn read_csv<R: std::io::Read>(
    mut reader: csv::Reader<R>,
    target_column: &str,
    id_column: &str,
) -> Result<Dataset> {
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| UqError::MissingColumn(name.to_string()))
    };
    let id_idx = find(id_column)?;
    let target_idx = find(target_column)?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != id_idx && c != target_idx)
        .collect();
    let feature_names = feature_cols
        .iter()
        .map(|&c| header[c].trim().to_string())
        .collect();

    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            parse_cell(raw).ok_or_else(|| UqError::UnparseableNumeric {
                row,
                column: header[c].to_string(),
                value: raw.to_string(),
            })
        };
        ids.push(record.get(id_idx).unwrap_or("").trim().to_string());
        targets.push(cell(target_idx)?);
        features.push(
            feature_cols
                .iter()
                .map(|&c| cell(c))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Dataset::new(ids, feature_names, features, targets, "")
}

/// Two-way (train/test) or three-way (base/error/test) partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    TwoWay,
    ThreeWay,
}

impl SplitKind {
    pub fn fractions(self) -> &'static [f64] {
        match self {
            SplitKind::TwoWay => &[0.9, 0.1],
            SplitKind::ThreeWay => &[0.45, 0.45, 0.1],
        }
    }
}

/// Disjoint index partitions covering `0..n`.
///
/// The last partition is always the held-out test slice, of size
/// `round(0.1·n)`. Both kinds slice the same seeded permutation, so for a
/// given `(n, seed)` the two-way and three-way plans share their test slice
/// and the first two three-way partitions together equal the two-way
/// training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub partitions: Vec<Vec<usize>>,
}

impl SplitPlan {
    pub fn n_samples(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn test(&self) -> &[usize] {
        self.partitions.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub const MIN_SPLIT_SAMPLES: usize = 10;

pub fn make_split(n: usize, kind: SplitKind, seed: u64) -> Result<SplitPlan> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(UqError::TooFewSamples {
            needed: MIN_SPLIT_SAMPLES,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_test = (0.1 * n as f64).round() as usize;
    let sizes = match kind {
        SplitKind::TwoWay => vec![n - n_test, n_test],
        SplitKind::ThreeWay => {
            let first = (0.45 * n as f64).round() as usize;
            vec![first, n - n_test - first, n_test]
        }
    };
    let mut partitions = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        partitions.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(SplitPlan {
        kind,
        fractions: kind.fractions().to_vec(),
        seed,
        partitions,
    })
}
