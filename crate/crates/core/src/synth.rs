//! Seeded synthetic regression problems with known noise structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::Dataset;

/// `y = sin(x) + N(0, noise²)` with `x ~ U(lo, hi)`.
pub fn sine(n: usize, lo: f64, hi: f64, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, noise).expect("noise must be finite and non-negative");
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(lo..hi);
        rows.push(vec![x]);
        ys.push(x.sin() + eps.sample(&mut rng));
    }
    Dataset::from_rows(rows, ys).expect("rows and targets agree")
}

/// `y = x + |x|·N(0, 1)` with `x ~ U(−range, range)`; the noise scale at
/// row `i` is `|features[i][0]|`.
pub fn heteroscedastic(n: usize, range: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-range..range);
        let z: f64 = StandardNormal.sample(&mut rng);
        rows.push(vec![x]);
        ys.push(x + x.abs() * z);
    }
    Dataset::from_rows(rows, ys).expect("rows and targets agree")
}

/// Four features on `U(−2, 2)`: a smooth signal in the first two, noise
/// scale `0.2 + 0.3·|x₂|` in the third, and an irrelevant fourth.
pub fn fixture(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z: f64 = StandardNormal.sample(&mut rng);
        let signal = x[0].sin() + 0.5 * x[1] * x[1];
        ys.push(signal + fixture_noise_scale(&x) * z);
        rows.push(x);
    }
    let mut ds = Dataset::from_rows(rows, ys).expect("rows and targets agree");
    ds.ids = (0..n).map(|i| format!("s{i:05}")).collect();
    ds.feature_names = (0..4).map(|j| format!("f{j}")).collect();
    ds.unit = "eV".into();
    ds
}

pub fn fixture_noise_scale(row: &[f64]) -> f64 {
    0.2 + 0.3 * row[2].abs()
}
