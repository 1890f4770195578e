use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use uqkit::data::{make_split, Dataset, SplitKind};
use uqkit::forest::{fit_forest, predict_forest, ForestConfig, MaxFeatures};
use uqkit::stats;

fn linear_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let ys = rows.iter().map(|r| r[0] + noise.sample(&mut rng)).collect();
    Dataset::from_rows(rows, ys).unwrap()
}

#[test]
fn beats_the_mean_predictor() {
    let ds = linear_data(1000, 4);
    let plan = make_split(ds.n_samples(), SplitKind::TwoWay, 4).unwrap();
    let train = ds.subset(&plan.partitions[0]);
    let test = ds.subset(plan.test());
    let model = fit_forest(&train, &ForestConfig::default()).unwrap();
    let pred = predict_forest(&model, &test.features).unwrap();
    let mse = |p: &[f64]| p.iter().zip(&test.targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64;
    let baseline = vec![stats::mean(&train.targets); test.n_samples()];
    assert!(mse(&pred) < mse(&baseline), "forest {} vs mean {}", mse(&pred), mse(&baseline));
    assert!(model.oob_mse.is_some_and(|m| m < stats::std_dev(&train.targets).powi(2)));
}

#[test]
fn feature_fraction_still_bounded_by_trees() {
    let ds = linear_data(300, 9);
    let cfg = ForestConfig { n_trees: 25, max_features: MaxFeatures::Fraction(0.5), seed: 2, ..Default::default() };
    let model = fit_forest(&ds, &cfg).unwrap();
    let per_tree = model.predict_per_tree(&ds.features[..20]).unwrap();
    let mean = model.predict(&ds.features[..20]).unwrap();
    for (i, m) in mean.iter().enumerate() {
        let col: Vec<f64> = per_tree.iter().map(|t| t[i]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= *m && *m <= hi);
    }
}
