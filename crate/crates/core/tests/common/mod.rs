#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::json;
use uqkit::cli::{merge_json, ExperimentConfig};
use uqkit::stats;
use uqkit::uq::Method;

pub const METHODS: [Method; 4] = [Method::Quantile, Method::ThreeSplitL1, Method::ThreeSplitL2, Method::Gp];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Defaults overlaid with the bundled experiment file, pointed at the
/// bundled fixture.
pub fn fixture_config(method: Method, seed: u64, out: &Path) -> ExperimentConfig {
    let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
    let text = std::fs::read_to_string(fixture_dir().join("experiment.json")).unwrap();
    merge_json(&mut v, serde_json::from_str(&text).unwrap());
    merge_json(
        &mut v,
        json!({
            "data": fixture_dir().join("fixture.csv"),
            "method": method,
            "seed": seed,
            "out": out,
        }),
    );
    serde_json::from_value(v).unwrap()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (stats::mean(&ra), stats::mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
