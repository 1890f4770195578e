use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{provenance_line, seeds_map, write_json, ExperimentConfig, ModelFile, SavedModel};
use crate::data::{make_split, Dataset, SplitKind};
use crate::error::Result;
use crate::gp::{fit_gp, KernelExpr};
use crate::model::Engine;
use crate::uq::{
    gp_intervals, inbounds_flags, quantile_intervals, residual_histogram, threesplit_intervals,
    ErrorTargetKind, InboundsMode, Method, PredictionInterval, Provenance, UqReport,
    REPORT_CSV_HEADER,
};

pub const HISTOGRAM_BINS: usize = 30;

pub struct RunOutput {
    pub report: UqReport,
    pub out_dir: PathBuf,
}

fn engine_seed(engine: &Engine) -> u64 {
    match engine {
        Engine::Gbdt(c) => c.seed,
        Engine::Forest(c) => c.seed,
    }
}

/// Loads, splits, fits the configured method, evaluates it on the test
/// partition and writes the report, models, per-point intervals and the
/// residual histogram to `config.out`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunOutput> {
    let data = config.load_data()?;
    let dataset_hash = data.content_hash();
    let n = data.n_samples();

    let (intervals, test, models, seeds): (Vec<PredictionInterval>, Dataset, Vec<(String, SavedModel)>, _) =
        match config.method {
            Method::Quantile => {
                let plan = make_split(n, SplitKind::TwoWay, config.seed)?;
                let train = data.subset(&plan.partitions[0]);
                let test = data.subset(plan.test());
                let run = quantile_intervals(&train, &test, config.alpha_lo, config.alpha_hi, &config.quantile)?;
                if run.crossings > 0 {
                    log::warn!("{} test rows have crossed quantile predictions", run.crossings);
                }
                let seeds = seeds_map(&[
                    ("split", config.seed),
                    ("lower", config.quantile.lower.seed),
                    ("mid", config.quantile.mid.seed),
                    ("upper", config.quantile.upper.seed),
                ]);
                let models = vec![
                    ("lower".to_string(), SavedModel::Gbdt(run.lower)),
                    ("mid".to_string(), SavedModel::Gbdt(run.mid)),
                    ("upper".to_string(), SavedModel::Gbdt(run.upper)),
                ];
                (run.intervals, test, models, seeds)
            }
            Method::ThreeSplitL1 | Method::ThreeSplitL2 => {
                let kind = if config.method == Method::ThreeSplitL1 {
                    ErrorTargetKind::L1
                } else {
                    ErrorTargetKind::L2
                };
                let plan = make_split(n, SplitKind::ThreeWay, config.seed)?;
                let run = threesplit_intervals(&data, &plan, kind, &config.threesplit)?;
                if run.clipped > 0 {
                    log::warn!("{} negative error predictions clipped to zero", run.clipped);
                }
                let seed = engine_seed(&config.threesplit);
                let seeds = seeds_map(&[("split", config.seed), ("base", seed), ("error", seed)]);
                let models = vec![
                    ("base".to_string(), run.base_model.into()),
                    ("error".to_string(), run.error_model.into()),
                ];
                (run.intervals, data.subset(plan.test()), models, seeds)
            }
            Method::Gp => {
                let plan = make_split(n, SplitKind::TwoWay, config.seed)?;
                let mut train = data.subset(&plan.partitions[0]);
                let mut test = data.subset(plan.test());
                if let Some(names) = &config.gp.features {
                    train = train.select_features(names)?;
                    test = test.select_features(names)?;
                }
                if let Some(cap) = config.gp.max_train_points {
                    if train.n_samples() > cap {
                        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                        let mut idx = rand::seq::index::sample(&mut rng, train.n_samples(), cap).into_vec();
                        idx.sort_unstable();
                        train = train.subset(&idx);
                    }
                }
                let template = config
                    .gp
                    .kernel
                    .clone()
                    .unwrap_or_else(|| KernelExpr::default_for(train.n_features()));
                let model = fit_gp(&train, &template, &config.gp.fit)?;
                let intervals = gp_intervals(&model, &test)?;
                let seeds = seeds_map(&[("split", config.seed), ("gp_restarts", config.gp.fit.seed)]);
                (intervals, test, vec![("gp".to_string(), SavedModel::Gp(model))], seeds)
            }
        };

    let provenance = Provenance {
        config_hash: config.hash(),
        dataset_hash,
        split_seed: config.seed,
        seeds,
    };
    let report = UqReport::evaluate(
        config.property_name(),
        config.method,
        &intervals,
        &test.targets,
        provenance.clone(),
    )?;

    let out = &config.out;
    std::fs::create_dir_all(out.join("models"))?;
    write_json(&out.join("report.json"), &report)?;
    let header = provenance_line(&provenance);
    std::fs::write(
        out.join("report.csv"),
        format!("{header}{REPORT_CSV_HEADER}\n{}\n", report.csv_row()),
    )?;
    for (role, model) in models {
        let file = ModelFile {
            provenance: provenance.clone(),
            role: role.clone(),
            model,
        };
        write_json(&out.join("models").join(format!("{role}.json")), &file)?;
    }

    let flags = inbounds_flags(&intervals, &test.targets, InboundsMode::Symmetric)?;
    let mut csv_text = header.clone();
    csv_text.push_str("id,observed,center,half_width,inbounds_flag\n");
    for (((id, y), iv), flag) in test.ids.iter().zip(&test.targets).zip(&intervals).zip(&flags) {
        let _ = writeln!(
            csv_text,
            "{},{:?},{:?},{:?},{}",
            csv_field(id),
            y,
            iv.center,
            iv.half_width,
            u8::from(*flag)
        );
    }
    std::fs::write(out.join("intervals.csv"), csv_text)?;

    let widths: Vec<f64> = intervals.iter().map(|iv| iv.half_width).collect();
    let errors: Vec<f64> = intervals
        .iter()
        .zip(&test.targets)
        .map(|(iv, y)| (y - iv.center).abs())
        .collect();
    let hist = residual_histogram(&widths, &errors, HISTOGRAM_BINS, None)?;
    std::fs::write(out.join("histogram.csv"), format!("{header}{}", hist.to_csv()))?;

    Ok(RunOutput {
        report,
        out_dir: out.clone(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
