//! Random hyperparameter search for one GBDT role of an experiment.
//!
//! Search space, sampled independently per trial:
//!
//! | parameter          | distribution                |
//! |--------------------|-----------------------------|
//! | `n_trees`          | log-uniform integer [50, 1000] |
//! | `learning_rate`    | log-uniform [0.01, 0.3]     |
//! | `max_leaves`       | uniform integer [4, 64]     |
//! | `min_samples_leaf` | uniform integer [1, 40]     |
//! | `subsample`        | uniform [0.5, 1]            |
//! | `colsample`        | uniform [0.5, 1]            |
//!
//! The objective and seed of the role's configured model are kept. Trials
//! are scored by MAE on a seeded 90/10 split of the role's training data;
//! the test partition is never touched.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{provenance_line, seeds_map, write_json, ExperimentConfig};
use crate::boosting::{fit_gbdt, GbdtConfig};
use crate::data::{make_split, Dataset, SplitKind};
use crate::error::{Result, UqError};
use crate::loss::Objective;
use crate::model::Engine;
use crate::stats;
use crate::uq::{ErrorTargetKind, Method, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchRole {
    Lower,
    Mid,
    Upper,
    Base,
    Error,
}

impl SearchRole {
    fn as_str(self) -> &'static str {
        match self {
            SearchRole::Lower => "lower",
            SearchRole::Mid => "mid",
            SearchRole::Upper => "upper",
            SearchRole::Base => "base",
            SearchRole::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: usize,
    pub role: SearchRole,
    pub seed: u64,
    /// Use the configured model itself as trial 0.
    pub include_default: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 20,
            role: SearchRole::Mid,
            seed: 0,
            include_default: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: GbdtConfig,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub role: SearchRole,
    pub best_index: usize,
    pub best: GbdtConfig,
    pub best_mae: f64,
    pub trials: Vec<Trial>,
    pub provenance: Provenance,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

fn sample_config<R: Rng>(rng: &mut R, template: &GbdtConfig) -> GbdtConfig {
    GbdtConfig {
        n_trees: log_uniform(rng, 50.0, 1000.0).round() as usize,
        learning_rate: log_uniform(rng, 0.01, 0.3),
        max_leaves: rng.random_range(4..=64),
        min_samples_leaf: rng.random_range(1..=40),
        subsample: rng.random_range(0.5..=1.0),
        colsample: rng.random_range(0.5..=1.0),
        seed: template.seed,
        objective: template.objective,
    }
}

/// Template config and training data for the searched role.
fn role_problem(config: &ExperimentConfig, data: &Dataset) -> Result<(GbdtConfig, Dataset)> {
    let role = config.search.role;
    let n = data.n_samples();
    match (config.method, role) {
        (Method::Quantile, SearchRole::Lower | SearchRole::Mid | SearchRole::Upper) => {
            let plan = make_split(n, SplitKind::TwoWay, config.seed)?;
            let train = data.subset(&plan.partitions[0]);
            let template = match role {
                SearchRole::Lower => config.quantile.lower.clone().with_objective(Objective::quantile(config.alpha_lo)?),
                SearchRole::Upper => config.quantile.upper.clone().with_objective(Objective::quantile(config.alpha_hi)?),
                _ => config.quantile.mid.clone().with_objective(Objective::Mse),
            };
            Ok((template, train))
        }
        (Method::ThreeSplitL1 | Method::ThreeSplitL2, SearchRole::Base | SearchRole::Error) => {
            let Engine::Gbdt(template) = &config.threesplit else {
                return Err(UqError::InvalidConfig("search needs a gbdt engine".into()));
            };
            let plan = make_split(n, SplitKind::ThreeWay, config.seed)?;
            let base_set = data.subset(&plan.partitions[0]);
            if role == SearchRole::Base {
                return Ok((template.clone(), base_set));
            }
            let kind = if config.method == Method::ThreeSplitL1 {
                ErrorTargetKind::L1
            } else {
                ErrorTargetKind::L2
            };
            let base = fit_gbdt(&base_set, template)?;
            let error_set = data.subset(&plan.partitions[1]);
            let pred = base.predict(&error_set.features)?;
            let targets = error_set.targets.iter().zip(&pred).map(|(&y, &p)| kind.target(y, p)).collect();
            Ok((template.clone(), Dataset { targets, ..error_set }))
        }
        (method, role) => Err(UqError::InvalidConfig(format!(
            "role `{}` does not apply to method `{method}`",
            role.as_str()
        ))),
    }
}

/// Runs `config.search.budget` trials and writes `search_trace.csv` and
/// `search_best.json` to `config.out`.
pub fn cmd_search(config: &ExperimentConfig) -> Result<SearchOutcome> {
    let search = &config.search;
    if search.budget == 0 {
        return Err(UqError::InvalidConfig("search budget must be at least 1".into()));
    }
    let data = config.load_data()?;
    let (template, role_data) = role_problem(config, &data)?;
    let inner = make_split(role_data.n_samples(), SplitKind::TwoWay, search.seed)?;
    let fit_set = role_data.subset(&inner.partitions[0]);
    let val_set = role_data.subset(inner.test());

    let trials = (0..search.budget)
        .into_par_iter()
        .map(|i| {
            let cfg = if i == 0 && search.include_default {
                template.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
                rng.set_stream(i as u64);
                sample_config(&mut rng, &template)
            };
            let model = fit_gbdt(&fit_set, &cfg)?;
            let pred = model.predict(&val_set.features)?;
            Ok(Trial {
                index: i,
                config: cfg,
                val_mae: stats::mae(&pred, &val_set.targets),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = trials
        .iter()
        .fold(&trials[0], |b, t| if t.val_mae < b.val_mae { t } else { b });

    let provenance = Provenance {
        config_hash: config.hash(),
        dataset_hash: data.content_hash(),
        split_seed: config.seed,
        seeds: seeds_map(&[("split", config.seed), ("search", search.seed), ("model", template.seed)]),
    };
    let outcome = SearchOutcome {
        role: search.role,
        best_index: best.index,
        best: best.config.clone(),
        best_mae: best.val_mae,
        trials: trials.clone(),
        provenance,
    };

    std::fs::create_dir_all(&config.out)?;
    let mut csv_text = provenance_line(&outcome.provenance);
    csv_text.push_str("trial,n_trees,learning_rate,max_leaves,min_samples_leaf,subsample,colsample,val_mae\n");
    for t in &outcome.trials {
        let c = &t.config;
        let _ = writeln!(
            csv_text,
            "{},{},{:?},{},{},{:?},{:?},{:?}",
            t.index, c.n_trees, c.learning_rate, c.max_leaves, c.min_samples_leaf, c.subsample, c.colsample, t.val_mae
        );
    }
    std::fs::write(config.out.join("search_trace.csv"), csv_text)?;
    write_json(&config.out.join("search_best.json"), &outcome)?;
    Ok(outcome)
}
