use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use uqkit::cli::{
    cmd_compare, cmd_histogram, cmd_run, cmd_search, cmd_select_descriptors, merge_json,
    ExperimentConfig,
};
use uqkit::{Result, UqError};

#[derive(Parser)]
#[command(name = "uqkit", version, about = "Prediction intervals for tabular regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one method, build test-set intervals and write a report.
    Run(ExperimentArgs),
    /// Tabulate reports evaluated on the same test partition.
    Compare {
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random hyperparameter search for one GBDT role.
    Search {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        budget: Option<usize>,
        /// lower, mid, upper, base or error.
        #[arg(long)]
        role: Option<String>,
    },
    /// Features shared by the top-k importance lists of several GBDT models.
    SelectDescriptors {
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
    },
    /// Histogram of `half_width − |observed − center|` from an intervals CSV.
    Histogram {
        intervals: PathBuf,
        #[arg(long, default_value_t = 30)]
        bins: usize,
        /// `lo,hi`
        #[arg(long, value_parser = parse_range)]
        range: Option<(f64, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    id_col: Option<String>,
    /// quantile, threesplit-l1, threesplit-l2 or gp.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value_t = 0.14)]
    alpha_lo: f64,
    #[arg(long, default_value_t = 0.84)]
    alpha_hi: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment config JSON; its keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self, extra: Value) -> Result<ExperimentConfig> {
        let mut v = serde_json::to_value(ExperimentConfig::default())?;
        let mut flags = json!({ "alpha_lo": self.alpha_lo, "alpha_hi": self.alpha_hi });
        let obj = flags.as_object_mut().expect("object literal");
        if let Some(p) = &self.data {
            obj.insert("data".into(), json!(p));
        }
        if let Some(t) = &self.target {
            obj.insert("target".into(), json!(t));
        }
        if let Some(c) = &self.id_col {
            obj.insert("id_col".into(), json!(c));
        }
        if let Some(m) = &self.method {
            obj.insert("method".into(), json!(m.parse::<uqkit::uq::Method>()?));
        }
        if let Some(s) = self.seed {
            obj.insert("seed".into(), json!(s));
        }
        if let Some(o) = &self.out {
            obj.insert("out".into(), json!(o));
        }
        merge_json(&mut v, flags);
        merge_json(&mut v, extra);
        if let Some(path) = &self.config {
            merge_json(&mut v, serde_json::from_str(&std::fs::read_to_string(path)?)?);
        }
        Ok(serde_json::from_value(v)?)
    }
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let out = cmd_run(&args.resolve(json!({}))?)?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
        }
        Command::Compare { reports, out } => {
            let table = cmd_compare(&reports, out.as_deref())?;
            print!("{}", table.to_csv());
        }
        Command::Search { experiment, budget, role } => {
            let mut search = json!({});
            if let Some(b) = budget {
                search["budget"] = json!(b);
            }
            if let Some(r) = role {
                search["role"] = json!(r);
            }
            let outcome = cmd_search(&experiment.resolve(json!({ "search": search }))?)?;
            println!("{}", serde_json::to_string_pretty(&json!({
                "best_index": outcome.best_index,
                "best_mae": outcome.best_mae,
                "best": outcome.best,
            }))?);
        }
        Command::SelectDescriptors { models, top_k } => {
            for name in cmd_select_descriptors(&models, top_k)? {
                println!("{name}");
            }
        }
        Command::Histogram { intervals, bins, range, out } => {
            let text = cmd_histogram(&intervals, bins, range)?.to_csv();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("UQKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &UqError) -> ExitCode {
    let body = json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}
