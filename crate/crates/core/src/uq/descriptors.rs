//! Descriptor selection from boosted-tree feature importances.

use std::collections::HashMap;

use crate::boosting::{feature_importance, FeatureGain, GbdtModel};
use crate::error::{Result, UqError};

/// Features in the top `top_k` (by gain) of every model, ordered by
/// descending mean gain across the models.
pub fn select_descriptors(models: &[&GbdtModel], top_k: usize) -> Result<Vec<String>> {
    if let Some(first) = models.first() {
        if models.iter().any(|m| m.feature_names != first.feature_names) {
            return Err(UqError::InvalidConfig(
                "models were trained on different feature sets".into(),
            ));
        }
    }
    let tables: Vec<Vec<FeatureGain>> = models.iter().map(|m| feature_importance(m)).collect();
    intersect_top_features(&tables, top_k)
}

/// Same as [`select_descriptors`] on ready-made ranked importance tables.
/// Features with zero gain never count as important.
pub fn intersect_top_features(tables: &[Vec<FeatureGain>], top_k: usize) -> Result<Vec<String>> {
    if tables.is_empty() {
        return Err(UqError::EmptyInput);
    }
    let tops: Vec<Vec<&FeatureGain>> = tables
        .iter()
        .map(|t| {
            let mut ranked: Vec<&FeatureGain> = t.iter().filter(|f| f.gain > 0.0).collect();
            ranked.sort_by(|a, b| b.gain.total_cmp(&a.gain).then(a.index.cmp(&b.index)));
            ranked.truncate(top_k);
            ranked
        })
        .collect();
    let gains: Vec<HashMap<&str, f64>> = tables
        .iter()
        .map(|t| t.iter().map(|f| (f.name.as_str(), f.gain)).collect())
        .collect();

    let mut shared: Vec<(String, f64)> = tops[0]
        .iter()
        .filter(|f| tops[1..].iter().all(|t| t.iter().any(|g| g.name == f.name)))
        .map(|f| {
            // Sorted summation keeps the mean independent of model order.
            let mut per_model: Vec<f64> = gains
                .iter()
                .map(|g| g.get(f.name.as_str()).copied().unwrap_or(0.0))
                .collect();
            per_model.sort_by(f64::total_cmp);
            let mean = per_model.iter().sum::<f64>() / per_model.len() as f64;
            (f.name.clone(), mean)
        })
        .collect();
    if shared.is_empty() {
        return Err(UqError::EmptyIntersection { top_k });
    }
    shared.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(shared.into_iter().map(|(name, _)| name).collect())
}
