//! Experiment orchestration behind the `uqkit` binary.
//!
//! Every artifact a command writes carries the config hash, the dataset
//! hash and the seeds used: JSON files through a `provenance` object, CSV
//! files through a leading `#` comment line.

mod compare;
mod run;
mod search;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boosting::GbdtModel;
use crate::data::{load_dataset, Dataset};
use crate::error::{Result, UqError};
use crate::forest::ForestModel;
use crate::gp::{GpFitOptions, GpModel, KernelExpr};
use crate::model::Engine;
use crate::uq::{residual_histogram, select_descriptors, Histogram, Method, Provenance, TriadConfig};

pub use compare::{cmd_compare, Comparison, ComparisonRow};
pub use run::{cmd_run, RunOutput};
pub use search::{cmd_search, SearchConfig, SearchOutcome, SearchRole, Trial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSettings {
    /// Kernel template; `None` means RBF_ARD plus white noise.
    pub kernel: Option<KernelExpr>,
    pub fit: GpFitOptions,
    /// Restrict the GP to these feature columns.
    pub features: Option<Vec<String>>,
    /// Seeded subsample of the training partition; the Gram matrix is
    /// `n × n`, so large partitions are cut down to this many rows.
    pub max_train_points: Option<usize>,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            kernel: None,
            fit: GpFitOptions::default(),
            features: None,
            max_train_points: Some(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub target: String,
    pub id_col: String,
    /// Label carried into reports; defaults to the target column name.
    pub property: Option<String>,
    pub method: Method,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Seed of the train/test split.
    pub seed: u64,
    pub out: PathBuf,
    pub quantile: TriadConfig,
    pub threesplit: Engine,
    pub gp: GpSettings,
    pub search: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: PathBuf::new(),
            target: "target".into(),
            id_col: "id".into(),
            property: None,
            method: Method::Quantile,
            alpha_lo: 0.14,
            alpha_hi: 0.84,
            seed: 0,
            out: PathBuf::from("uqkit-out"),
            quantile: TriadConfig::default(),
            threesplit: Engine::default(),
            gp: GpSettings::default(),
            search: SearchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn property_name(&self) -> &str {
        self.property.as_deref().unwrap_or(&self.target)
    }

    /// SHA-256 of the canonical JSON form, ignoring the input and output
    /// paths so that relocating files does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.data = PathBuf::new();
        c.out = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn load_data(&self) -> Result<Dataset> {
        let loaded = load_dataset(&self.data, &self.target, &self.id_col)?;
        if loaded.dropped_rows > 0 {
            log::warn!("dropped {} rows with missing or non-finite values", loaded.dropped_rows);
        }
        Ok(loaded.dataset)
    }
}

/// Shallow-merges the keys of `overrides` into `base`, recursing into
/// nested objects.
pub fn merge_json(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

pub(crate) fn provenance_line(p: &Provenance) -> String {
    let seeds: Vec<String> = p.seeds.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    format!(
        "# config_hash={} dataset_hash={} split_seed={} seeds={}\n",
        p.config_hash,
        p.dataset_hash,
        p.split_seed,
        seeds.join(";")
    )
}

/// Serialized model as written under `models/`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub provenance: Provenance,
    pub role: String,
    pub model: SavedModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SavedModel {
    Gbdt(GbdtModel),
    Forest(ForestModel),
    Gp(GpModel),
}

impl From<crate::model::TreeModel> for SavedModel {
    fn from(m: crate::model::TreeModel) -> Self {
        match m {
            crate::model::TreeModel::Gbdt(g) => SavedModel::Gbdt(g),
            crate::model::TreeModel::Forest(f) => SavedModel::Forest(f),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a GBDT from a `models/*.json` file or from a bare model JSON.
pub fn load_gbdt(path: &Path) -> Result<GbdtModel> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(file) = serde_json::from_str::<ModelFile>(&text) {
        return match file.model {
            SavedModel::Gbdt(m) => Ok(m),
            _ => Err(UqError::InvalidConfig(format!(
                "{} does not hold a gradient-boosted model",
                path.display()
            ))),
        };
    }
    GbdtModel::from_json(&text)
}

/// Shared top features of the given GBDT model files, one name per line.
pub fn cmd_select_descriptors(paths: &[PathBuf], top_k: usize) -> Result<Vec<String>> {
    let models = paths.iter().map(|p| load_gbdt(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&GbdtModel> = models.iter().collect();
    select_descriptors(&refs, top_k)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct IntervalRow {
    pub id: String,
    pub observed: f64,
    pub center: f64,
    pub half_width: f64,
    pub inbounds_flag: u8,
}

pub fn read_intervals(path: &Path) -> Result<Vec<IntervalRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<IntervalRow>, _>>()?)
}

/// Histogram of `half_width − |observed − center|` from an intervals CSV.
pub fn cmd_histogram(path: &Path, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    let rows = read_intervals(path)?;
    let (widths, errors): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|r| (r.half_width, (r.observed - r.center).abs()))
        .unzip();
    residual_histogram(&widths, &errors, bins, range)
}

pub(crate) fn seeds_map(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_overrides_nested_keys() {
        let mut base = json!({"method": "quantile", "seed": 1, "gp": {"max_train_points": 10, "fit": {"restarts": 5}}});
        merge_json(&mut base, json!({"seed": 7, "gp": {"fit": {"restarts": 2}}}));
        assert_eq!(base, json!({"method": "quantile", "seed": 7, "gp": {"max_train_points": 10, "fit": {"restarts": 2}}}));
    }

    #[test]
    fn config_round_trip_and_hash_ignores_paths() {
        let mut cfg = ExperimentConfig { method: Method::ThreeSplitL2, ..Default::default() };
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let h = cfg.hash();
        cfg.out = "elsewhere".into();
        cfg.data = "other.csv".into();
        assert_eq!(cfg.hash(), h);
        cfg.seed = 3;
        assert_ne!(cfg.hash(), h);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"method": "gp", "alpha_lo": 0.2}"#).unwrap();
        assert_eq!(cfg.method, Method::Gp);
        assert_eq!(cfg.alpha_lo, 0.2);
        assert_eq!(cfg.alpha_hi, 0.84);
        assert_eq!(cfg.property_name(), "target");
    }
}
