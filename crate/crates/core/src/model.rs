//! On-disk envelope for fitted tree ensembles and the engine selector used
//! by the learned-error pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::data::Dataset;
use crate::error::Result;
use crate::forest::{fit_forest, ForestConfig, ForestModel};

/// Regressor used for the base and error models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum Engine {
    Gbdt(GbdtConfig),
    Forest(ForestConfig),
}

impl Default for Engine {
    fn default() -> Self {
        Engine::Gbdt(GbdtConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeModel {
    Gbdt(GbdtModel),
    Forest(ForestModel),
}

impl Engine {
    pub fn fit(&self, train: &Dataset) -> Result<TreeModel> {
        Ok(match self {
            Engine::Gbdt(cfg) => TreeModel::Gbdt(fit_gbdt(train, cfg)?),
            Engine::Forest(cfg) => TreeModel::Forest(fit_forest(train, cfg)?),
        })
    }
}

impl TreeModel {
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            TreeModel::Gbdt(m) => m.predict(features),
            TreeModel::Forest(m) => m.predict(features),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
