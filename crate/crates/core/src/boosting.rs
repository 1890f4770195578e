//! Gradient-boosted regression trees for any [`Objective`].
//!
//! Trees are fit to per-sample gradients with unit hessians. For the
//! absolute and pinball objectives every leaf is then reset to the
//! matching order statistic of the residuals it holds, which is the exact
//! minimiser of the loss inside that leaf.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, UqError};
use crate::loss::Objective;
use crate::stats;
use crate::tree::{grow_tree, ColumnStore, GrowParams, RegressionTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 500,
            learning_rate: 0.05,
            max_leaves: 31,
            min_samples_leaf: 5,
            subsample: 1.0,
            colsample: 1.0,
            seed: 0,
            objective: Objective::Mse,
        }
    }
}

impl GbdtConfig {
    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(UqError::InvalidConfig(msg));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if self.max_leaves < 2 {
            return bad(format!("max_leaves must be at least 2, got {}", self.max_leaves));
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        for (name, v) in [("subsample", self.subsample), ("colsample", self.colsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        self.objective.validate()
    }
}

/// A fitted boosted ensemble. Leaf values are stored unscaled; predictions
/// are `base_score + learning_rate · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub objective: Objective,
    pub trees: Vec<RegressionTree>,
    pub feature_names: Vec<String>,
    pub config: GbdtConfig,
    /// Set when every feature column was constant, so no tree could split.
    #[serde(default)]
    pub degenerate_features: bool,
}

/// Total split gain credited to one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGain {
    pub name: String,
    pub index: usize,
    pub gain: f64,
}

pub fn fit_gbdt(train: &Dataset, config: &GbdtConfig) -> Result<GbdtModel> {
    config.validate()?;
    let n = train.n_samples();
    let needed = (2 * config.min_samples_leaf).max(1);
    if n < needed {
        return Err(UqError::TooFewSamples { needed, got: n });
    }
    let d = train.n_features();
    let objective = config.objective;
    let targets = &train.targets;
    let base_score = objective.optimal_constant(targets);

    let mut model = GbdtModel {
        base_score,
        learning_rate: config.learning_rate,
        objective,
        trees: Vec::with_capacity(config.n_trees),
        feature_names: train.feature_names.clone(),
        config: config.clone(),
        degenerate_features: false,
    };
    let store = ColumnStore::new(&train.features, d);
    if d == 0 || store.all_constant() {
        log::warn!("all features are constant; model reduces to the base score");
        model.degenerate_features = true;
        return Ok(model);
    }

    let params = GrowParams {
        max_leaves: config.max_leaves,
        min_samples_leaf: config.min_samples_leaf,
        features_per_node: None,
    };
    let n_rows = ((config.subsample * n as f64).round() as usize).clamp(needed, n);
    let n_cols = ((config.colsample * d as f64).ceil() as usize).clamp(1, d);
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut weight = vec![0.0; n];

    for t in 0..config.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(t as u64);

        if n_rows == n {
            weight.fill(1.0);
        } else {
            weight.fill(0.0);
            for r in rand::seq::index::sample(&mut rng, n, n_rows) {
                weight[r] = 1.0;
            }
        }
        let features: Vec<usize> = if n_cols == d {
            (0..d).collect()
        } else {
            let mut f = rand::seq::index::sample(&mut rng, d, n_cols).into_vec();
            f.sort_unstable();
            f
        };
        for i in 0..n {
            (grad[i], hess[i]) = objective.grad_hess(targets[i], pred[i]);
        }

        let mut grown = grow_tree(&store, &features, &grad, &hess, &weight, &params, &mut rng);
        if let Some(alpha) = objective.refits_leaves() {
            for (node, rows) in &grown.leaf_rows {
                let residuals: Vec<f64> = rows
                    .iter()
                    .map(|&r| targets[r as usize] - pred[r as usize])
                    .collect();
                grown.tree.set_leaf_value(*node, stats::quantile(&residuals, alpha));
            }
        }
        for (p, row) in pred.iter_mut().zip(&train.features) {
            *p += config.learning_rate * grown.tree.predict_row(row);
        }
        model.trees.push(grown.tree);
    }
    Ok(model)
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Predictions using only the first `n_trees` trees.
    pub fn predict_staged(&self, features: &[Vec<f64>], n_trees: usize) -> Result<Vec<f64>> {
        check_width(features, self.n_features())?;
        let trees = &self.trees[..n_trees.min(self.trees.len())];
        Ok(features
            .iter()
            .map(|row| {
                let sum: f64 = trees.iter().map(|t| t.predict_row(row)).sum();
                self.base_score + self.learning_rate * sum
            })
            .collect())
    }

    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.predict_staged(features, self.trees.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn check_width(features: &[Vec<f64>], d: usize) -> Result<()> {
    if let Some(row) = features.iter().find(|r| r.len() != d) {
        return Err(UqError::DimensionMismatch {
            expected: d,
            got: row.len(),
        });
    }
    Ok(())
}

pub fn predict_gbdt(model: &GbdtModel, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(features)
}

/// Per-feature total gain, sorted by descending gain with ties broken by
/// ascending feature index.
pub fn feature_importance(model: &GbdtModel) -> Vec<FeatureGain> {
    let mut gains = vec![0.0; model.n_features()];
    for tree in &model.trees {
        if tree.max_feature().is_some_and(|f| f < gains.len()) {
            tree.accumulate_gain(&mut gains);
        }
    }
    rank_gains(&model.feature_names, &gains)
}

pub(crate) fn rank_gains(names: &[String], gains: &[f64]) -> Vec<FeatureGain> {
    let mut ranked: Vec<FeatureGain> = names
        .iter()
        .zip(gains)
        .enumerate()
        .map(|(index, (name, &gain))| FeatureGain {
            name: name.clone(),
            index,
            gain: gain.max(0.0),
        })
        .collect();
    ranked.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.index.cmp(&b.index)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::loss_value;
    use crate::tree::Node;

    fn step_data() -> Dataset {
        let xs = [-2.0, -1.5, -1.0, -0.25, 0.0, 0.5, 1.0, 3.0];
        let rows = xs.iter().map(|&x| vec![x]).collect();
        let ys = xs.iter().map(|&x| if x < 0.0 { 0.0 } else { 1.0 }).collect();
        Dataset::from_rows(rows, ys).unwrap()
    }

    fn one_tree() -> GbdtConfig {
        GbdtConfig {
            n_trees: 1,
            learning_rate: 1.0,
            max_leaves: 2,
            min_samples_leaf: 1,
            ..GbdtConfig::default()
        }
    }

    /// Every admissible threshold with its squared-error reduction.
    fn brute_force_splits(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        let mut uniq: Vec<f64> = xs.to_vec();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        uniq.windows(2)
            .map(|w| {
                let thr = (w[0] + w[1]) / 2.0;
                let l: Vec<f64> = xs.iter().zip(ys).filter(|(x, _)| **x <= thr).map(|p| *p.1).collect();
                let r: Vec<f64> = xs.iter().zip(ys).filter(|(x, _)| **x > thr).map(|p| *p.1).collect();
                (thr, sse(ys) - sse(&l) - sse(&r))
            })
            .collect()
    }

    #[test]
    fn step_data_exact_fit() {
        let ds = step_data();
        let model = fit_gbdt(&ds, &one_tree()).unwrap();
        let pred = model.predict(&ds.features).unwrap();
        assert_eq!(pred, ds.targets);

        let xs: Vec<f64> = ds.features.iter().map(|r| r[0]).collect();
        let oracle = brute_force_splits(&xs, &ds.targets);
        let best = oracle.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        match model.trees[0].nodes[0] {
            Node::Split { threshold, gain, .. } => {
                assert!((-0.25..0.0).contains(&threshold));
                assert!((gain - best.1).abs() < 1e-12);
            }
            _ => panic!("no split"),
        }
        let imp = feature_importance(&model);
        assert_eq!(imp[0].name, "x0");
        assert!((imp[0].gain - best.1).abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        let rows = (0..20).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows(rows, vec![3.5; 20]).unwrap();
        let model = fit_gbdt(&ds, &GbdtConfig { n_trees: 10, ..Default::default() }).unwrap();
        let pred = model.predict(&ds.features).unwrap();
        assert!(pred.iter().all(|&p| p == 3.5));
        assert_eq!(loss_value(&Objective::Mse, &ds.targets, &pred).unwrap(), 0.0);
    }

    #[test]
    fn empty_model_predicts_base_score() {
        let ds = step_data();
        let mut model = fit_gbdt(&ds, &one_tree()).unwrap();
        model.trees.clear();
        let pred = model.predict(&ds.features).unwrap();
        assert!(pred.iter().all(|&p| p == model.base_score));
        assert!(feature_importance(&model).iter().all(|f| f.gain == 0.0));
    }

    #[test]
    fn degenerate_features_flagged() {
        let rows = vec![vec![1.0, 2.0]; 12];
        let ys = (0..12).map(f64::from).collect();
        let ds = Dataset::from_rows(rows, ys).unwrap();
        let model = fit_gbdt(&ds, &GbdtConfig::default()).unwrap();
        assert!(model.degenerate_features);
        assert!(model.trees.is_empty());
        assert_eq!(model.base_score, 5.5);
    }

    #[test]
    fn too_few_samples() {
        let ds = Dataset::from_rows(vec![vec![0.0]; 9], vec![0.0; 9]).unwrap();
        assert!(matches!(
            fit_gbdt(&ds, &GbdtConfig::default()),
            Err(UqError::TooFewSamples { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn invalid_config() {
        let ds = step_data();
        for cfg in [
            GbdtConfig { n_trees: 0, ..one_tree() },
            GbdtConfig { learning_rate: 1.5, ..one_tree() },
            GbdtConfig { max_leaves: 1, ..one_tree() },
            GbdtConfig { subsample: 0.0, ..one_tree() },
        ] {
            assert!(matches!(fit_gbdt(&ds, &cfg), Err(UqError::InvalidConfig(_))));
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = fit_gbdt(&step_data(), &one_tree()).unwrap();
        assert!(matches!(
            model.predict(&[vec![1.0, 2.0]]),
            Err(UqError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn row_permutation_equivariance() {
        let ds = step_data();
        let model = fit_gbdt(&ds, &GbdtConfig { n_trees: 5, min_samples_leaf: 1, ..Default::default() }).unwrap();
        let mut rows = ds.features.clone();
        let base = model.predict(&rows).unwrap();
        rows.reverse();
        let mut rev = model.predict(&rows).unwrap();
        rev.reverse();
        assert_eq!(base, rev);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin(), i as f64 / 7.0]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[0] * 3.1 + r[1].cos()).collect();
        let ds = Dataset::from_rows(rows, ys).unwrap();
        let cfg = GbdtConfig { n_trees: 20, subsample: 0.7, colsample: 0.5, seed: 9, ..Default::default() };
        let model = fit_gbdt(&ds, &cfg).unwrap();
        let back = GbdtModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
        assert_eq!(model.predict(&ds.features).unwrap(), back.predict(&ds.features).unwrap());
        let again = fit_gbdt(&ds, &cfg).unwrap();
        assert_eq!(model.to_json().unwrap(), again.to_json().unwrap());
    }
}
