//! Bagged regression forest with fixed, documented defaults.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::check_width;
use crate::data::Dataset;
use crate::error::{Result, UqError};
use crate::stats;
use crate::tree::{grow_tree, ColumnStore, GrowParams, GrownTree, RegressionTree};

/// Features considered at every split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: MaxFeatures::All,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(UqError::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(UqError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(UqError::InvalidConfig(format!(
                    "max_features fraction must be in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// Training rows left out of each tree's bootstrap sample.
    pub oob_indices: Vec<Vec<usize>>,
    /// Mean squared out-of-bag error over rows with at least one OOB tree.
    pub oob_mse: Option<f64>,
    pub feature_names: Vec<String>,
    pub config: ForestConfig,
}

pub fn fit_forest(train: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    let n = train.n_samples();
    if n < 2 {
        return Err(UqError::TooFewSamples { needed: 2, got: n });
    }
    let d = train.n_features();
    let store = ColumnStore::new(&train.features, d);
    let features: Vec<usize> = (0..d).collect();
    let per_node = match config.max_features {
        MaxFeatures::All => None,
        MaxFeatures::Fraction(f) => Some(((f * d as f64).ceil() as usize).clamp(1, d.max(1))),
    };
    let params = GrowParams {
        max_leaves: usize::MAX,
        min_samples_leaf: config.min_samples_leaf,
        features_per_node: per_node,
    };
    let hess = vec![1.0; n];

    // One independent stream per tree, so growing more trees never changes
    // the earlier ones.
    let fitted: Vec<(RegressionTree, Vec<usize>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut weight = vec![0.0; n];
            if config.bootstrap {
                for _ in 0..n {
                    weight[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weight.fill(1.0);
            }
            let total: f64 = weight.iter().sum();
            let center = weight
                .iter()
                .zip(&train.targets)
                .map(|(w, y)| w * y)
                .sum::<f64>()
                / total;
            let grad: Vec<f64> = train.targets.iter().map(|y| center - y).collect();
            let tree = if d == 0 {
                RegressionTree::constant(center)
            } else {
                let grown = grow_tree(&store, &features, &grad, &hess, &weight, &params, &mut rng);
                leaf_means(grown, &weight, &train.targets)
            };
            let oob = (0..n).filter(|&i| weight[i] == 0.0).collect();
            (tree, oob)
        })
        .collect();
    let (trees, oob_indices): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();

    let mut model = ForestModel {
        trees,
        oob_indices,
        oob_mse: None,
        feature_names: train.feature_names.clone(),
        config: config.clone(),
    };
    model.oob_mse = model.oob_error(train);
    Ok(model)
}

/// Sets every leaf to the weighted mean target of its rows, computed
/// directly rather than as `center − G/H` so pure leaves are exact.
fn leaf_means(grown: GrownTree, weight: &[f64], targets: &[f64]) -> RegressionTree {
    let mut tree = grown.tree;
    for (node, rows) in grown.leaf_rows {
        let (mut sw, mut swy) = (0.0, 0.0);
        for &r in &rows {
            sw += weight[r as usize];
            swy += weight[r as usize] * targets[r as usize];
        }
        tree.set_leaf_value(node, swy / sw);
    }
    tree
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_width(features, self.n_features())?;
        let k = self.trees.len() as f64;
        Ok(features
            .iter()
            .map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k)
            .collect())
    }

    /// Every tree's prediction for every row: `out[tree][row]`.
    pub fn predict_per_tree(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_width(features, self.n_features())?;
        Ok(self
            .trees
            .iter()
            .map(|t| features.iter().map(|row| t.predict_row(row)).collect())
            .collect())
    }

    /// Out-of-bag mean squared error on the training set the forest was fit
    /// on; `None` when no row was ever out of bag.
    pub fn oob_error(&self, train: &Dataset) -> Option<f64> {
        let n = train.n_samples();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (tree, oob) in self.trees.iter().zip(&self.oob_indices) {
            for &i in oob {
                sum[i] += tree.predict_row(&train.features[i]);
                count[i] += 1;
            }
        }
        let residuals: Vec<f64> = (0..n)
            .filter(|&i| count[i] > 0)
            .map(|i| (sum[i] / count[i] as f64 - train.targets[i]).powi(2))
            .collect();
        (!residuals.is_empty()).then(|| stats::mean(&residuals))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn predict_forest(model: &ForestModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 7) % 13) as f64]).collect();
        let ys = rows.iter().map(|r| r[0] * 0.5 + (r[1] * 0.3).sin()).collect();
        Dataset::from_rows(rows, ys).unwrap()
    }

    #[test]
    fn constant_target_is_exact() {
        let ds = Dataset::from_rows((0..30).map(|i| vec![i as f64]).collect(), vec![2.25; 30]).unwrap();
        let model = fit_forest(&ds, &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        assert!(model.predict(&ds.features).unwrap().iter().all(|&p| p == 2.25));
    }

    #[test]
    fn single_unpruned_tree_memorises() {
        let ds = ramp(40);
        let cfg = ForestConfig { n_trees: 1, bootstrap: false, ..Default::default() };
        let model = fit_forest(&ds, &cfg).unwrap();
        let pred = model.predict(&ds.features).unwrap();
        for (p, y) in pred.iter().zip(&ds.targets) {
            assert!((p - y).abs() < 1e-12, "{p} vs {y}");
        }
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let ds = ramp(50);
        let model = fit_forest(&ds, &ForestConfig { n_trees: 7, seed: 3, ..Default::default() }).unwrap();
        let per_tree = model.predict_per_tree(&ds.features).unwrap();
        let pred = model.predict(&ds.features).unwrap();
        for (i, p) in pred.iter().enumerate() {
            let vals: Vec<f64> = per_tree.iter().map(|t| t[i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((p - mean).abs() < 1e-12);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
        }
    }

    #[test]
    fn duplicated_tree_shifts_by_averaging_weight() {
        let ds = ramp(50);
        let mut model = fit_forest(&ds, &ForestConfig { n_trees: 4, seed: 1, ..Default::default() }).unwrap();
        let query = vec![vec![12.5, 3.0]];
        let before = model.predict(&query).unwrap()[0];
        let dup = model.trees[2].clone();
        let dup_out = dup.predict_row(&query[0]);
        model.trees.push(dup);
        model.oob_indices.push(Vec::new());
        let after = model.predict(&query).unwrap()[0];
        let expected = before + (dup_out - before) / 5.0;
        assert!((after - expected).abs() < 1e-12);
    }

    #[test]
    fn prefix_property() {
        let ds = ramp(60);
        let small = fit_forest(&ds, &ForestConfig { n_trees: 3, seed: 5, ..Default::default() }).unwrap();
        let large = fit_forest(&ds, &ForestConfig { n_trees: 8, seed: 5, ..Default::default() }).unwrap();
        assert_eq!(small.trees[..], large.trees[..3]);
    }

    #[test]
    fn oob_sets_nonempty_and_error_reported() {
        let ds = ramp(40);
        let model = fit_forest(&ds, &ForestConfig { n_trees: 25, ..Default::default() }).unwrap();
        assert!(model.oob_indices.iter().all(|o| !o.is_empty()));
        assert!(model.oob_mse.unwrap().is_finite());
    }

    #[test]
    fn too_few_samples_and_bad_config() {
        let ds = Dataset::from_rows(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(
            fit_forest(&ds, &ForestConfig::default()),
            Err(UqError::TooFewSamples { .. })
        ));
        let ds = ramp(10);
        let cfg = ForestConfig { n_trees: 0, ..Default::default() };
        assert!(fit_forest(&ds, &cfg).is_err());
    }

    #[test]
    fn row_permutation_equivariance() {
        let ds = ramp(30);
        let model = fit_forest(&ds, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        let mut rows = ds.features.clone();
        let a = model.predict(&rows).unwrap();
        rows.reverse();
        let mut b = model.predict(&rows).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn feature_subsampling_is_deterministic() {
        let ds = ramp(40);
        let cfg = ForestConfig { n_trees: 6, max_features: MaxFeatures::Fraction(0.5), seed: 2, ..Default::default() };
        let a = fit_forest(&ds, &cfg).unwrap();
        let b = fit_forest(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
