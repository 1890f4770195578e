mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use common::{fixture_config, fixture_dir, METHODS};
use uqkit::cli::{
    cmd_compare, cmd_histogram, cmd_run, cmd_search, cmd_select_descriptors, read_intervals,
    ExperimentConfig, SearchRole,
};
use uqkit::uq::{Method, UqReport};
use uqkit::UqError;

fn uqkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uqkit"))
}

fn run_all(dir: &Path, seed: u64) -> Vec<PathBuf> {
    METHODS
        .iter()
        .map(|&m| {
            let out = dir.join(m.to_string());
            cmd_run(&fixture_config(m, seed, &out)).unwrap();
            out.join("report.json")
        })
        .collect()
}

#[test]
fn quantile_run_on_fixture_covers_near_target() {
    let dir = TempDir::new().unwrap();
    let out = cmd_run(&fixture_config(Method::Quantile, 7, dir.path())).unwrap();
    let pct = out.report.inbounds_pct;
    assert!((55.0..=80.0).contains(&pct), "inbounds {pct}%");
    assert_eq!(out.report.n_test, 200);
    assert!(out.report.provenance.seeds.contains_key("split"));

    let rows = read_intervals(&dir.path().join("intervals.csv")).unwrap();
    assert_eq!(rows.len(), out.report.n_test);
    let inside = rows.iter().filter(|r| r.inbounds_flag == 1).count();
    assert_eq!(100.0 * inside as f64 / rows.len() as f64, pct);

    for name in ["report.csv", "intervals.csv", "histogram.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with("# config_hash="), "{name}");
        assert!(text.lines().next().unwrap().contains(&out.report.provenance.dataset_hash));
    }
    for role in ["lower", "mid", "upper"] {
        let text = std::fs::read_to_string(dir.path().join("models").join(format!("{role}.json"))).unwrap();
        assert!(text.contains(&out.report.provenance.config_hash));
    }
}

#[test]
fn binary_run_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let status = uqkit()
            .args(["run", "--method", "threesplit-l2", "--seed", "3", "--data"])
            .arg(fixture_dir().join("fixture.csv"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(out);
    }
    for name in ["report.json", "report.csv", "intervals.csv", "histogram.csv", "models/base.json"] {
        let a = std::fs::read(outputs[0].join(name)).unwrap();
        let b = std::fs::read(outputs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn gp_with_too_many_features_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut text = String::from("id");
    for j in 0..65 {
        write!(text, ",x{j}").unwrap();
    }
    text.push_str(",target\n");
    for i in 0..40 {
        write!(text, "r{i}").unwrap();
        for _ in 0..66 {
            write!(text, ",{}", rng.random_range(-1.0..1.0)).unwrap();
        }
        text.push('\n');
    }
    let data = dir.path().join("wide.csv");
    std::fs::write(&data, text).unwrap();

    let output = uqkit()
        .args(["run", "--method", "gp", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"], "TooManyFeatures");
}

#[test]
fn missing_data_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let output = uqkit()
        .args(["run", "--data"])
        .arg(dir.path().join("absent.csv"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&output.stderr).unwrap();
    assert_eq!(err["error"], "Io");
}

#[test]
fn config_file_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(&config, r#"{"seed": 5, "alpha_lo": 0.2}"#).unwrap();
    let out = dir.path().join("out");
    let status = uqkit()
        .args(["run", "--method", "threesplit-l1", "--seed", "1", "--data"])
        .arg(fixture_dir().join("fixture.csv"))
        .arg("--out")
        .arg(&out)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let report: UqReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.provenance.split_seed, 5);
    assert_eq!(report.method, Method::ThreeSplitL1);
}

#[test]
fn comparing_identical_reports_gives_identical_rows() {
    let dir = TempDir::new().unwrap();
    cmd_run(&fixture_config(Method::ThreeSplitL1, 2, &dir.path().join("a"))).unwrap();
    let copy = dir.path().join("copy.json");
    std::fs::copy(dir.path().join("a/report.json"), &copy).unwrap();
    let table = cmd_compare(&[dir.path().join("a/report.json"), copy], None).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0], table.rows[1]);
}

#[test]
fn comparing_different_datasets_is_rejected() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a/report.json");
    cmd_run(&fixture_config(Method::ThreeSplitL1, 2, &dir.path().join("a"))).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    v["provenance"]["dataset_hash"] = "0000".into();
    let other = dir.path().join("other.json");
    std::fs::write(&other, v.to_string()).unwrap();
    let err = cmd_compare(&[first.clone(), other], None).unwrap_err();
    assert!(matches!(err, UqError::MismatchedPartitions(_)), "{err}");

    let single = cmd_compare(&[first], None).unwrap_err();
    assert!(matches!(single, UqError::InvalidConfig(_)));
}

#[test]
fn four_method_comparison_rescales_to_target() {
    let dir = TempDir::new().unwrap();
    let mut reports = run_all(dir.path(), 7);
    reports.reverse();
    let out = dir.path().join("cmp");
    let table = cmd_compare(&reports, Some(&out)).unwrap();
    let names: Vec<String> = table.rows.iter().map(|r| r.method.to_string()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), 4);
    let step = 100.0 / table.n_test as f64;
    for row in &table.rows {
        assert!((row.rescaled_inbounds_pct - 68.0).abs() <= step + 1e-9, "{row:?}");
        assert!(row.scale_factor > 0.0);
    }
    let csv = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains(&table.dataset_hash));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(out.join("comparison.json").exists());
}

fn search_config(dir: &Path, budget: usize, include_default: bool) -> ExperimentConfig {
    let mut cfg = fixture_config(Method::Quantile, 4, dir);
    cfg.search.budget = budget;
    cfg.search.role = SearchRole::Mid;
    cfg.search.seed = 9;
    cfg.search.include_default = include_default;
    cfg
}

#[test]
fn search_with_budget_one_returns_the_sampled_config() {
    let dir = TempDir::new().unwrap();
    let outcome = cmd_search(&search_config(dir.path(), 1, false)).unwrap();
    assert_eq!(outcome.trials.len(), 1);
    assert_eq!(outcome.best_index, 0);
    assert_eq!(outcome.best, outcome.trials[0].config);
    assert_eq!(outcome.best_mae, outcome.trials[0].val_mae);
    let trace = std::fs::read_to_string(dir.path().join("search_trace.csv")).unwrap();
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn search_best_beats_default_and_median() {
    let dir = TempDir::new().unwrap();
    let cfg = search_config(dir.path(), 20, true);
    let outcome = cmd_search(&cfg).unwrap();
    assert_eq!(outcome.trials.len(), 20);
    assert_eq!(outcome.trials[0].config.n_trees, cfg.quantile.mid.n_trees);
    assert!(outcome.best_mae <= outcome.trials[0].val_mae);

    let mut maes: Vec<f64> = outcome.trials.iter().map(|t| t.val_mae).collect();
    maes.sort_by(f64::total_cmp);
    let median = (maes[9] + maes[10]) / 2.0;
    assert!(outcome.best_mae <= median);
    assert_eq!(outcome.best_mae, maes[0]);

    let again = cmd_search(&cfg).unwrap();
    assert_eq!(again, outcome);
    assert!(dir.path().join("search_best.json").exists());
}

#[test]
fn search_rejects_roles_of_other_methods() {
    let dir = TempDir::new().unwrap();
    let mut cfg = search_config(dir.path(), 2, false);
    cfg.search.role = SearchRole::Error;
    assert!(matches!(cmd_search(&cfg), Err(UqError::InvalidConfig(_))));
}

#[test]
fn descriptor_and_histogram_commands_read_run_outputs() {
    let dir = TempDir::new().unwrap();
    let out = cmd_run(&fixture_config(Method::Quantile, 1, dir.path())).unwrap();
    let models: Vec<PathBuf> = ["lower", "mid", "upper"]
        .iter()
        .map(|r| dir.path().join("models").join(format!("{r}.json")))
        .collect();
    let shared = cmd_select_descriptors(&models, 4).unwrap();
    assert!(!shared.is_empty());
    assert!(shared.iter().all(|n| ["f0", "f1", "f2", "f3"].contains(&n.as_str())));
    assert!(shared.contains(&"f0".to_string()));

    let hist = cmd_histogram(&dir.path().join("intervals.csv"), 12, None).unwrap();
    assert_eq!(hist.counts.len(), 12);
    assert_eq!(hist.total(), out.report.n_test);

    let output = uqkit()
        .args(["histogram", "--bins", "5", "--range=-1,1"])
        .arg(dir.path().join("intervals.csv"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.lines().count() >= 6);
}
