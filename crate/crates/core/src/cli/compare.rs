use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::write_json;
use crate::error::{Result, UqError};
use crate::uq::{Method, UqReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub base_mae: f64,
    pub error_mae: f64,
    pub inbounds_pct: f64,
    pub scale_factor: f64,
    pub rescaled_inbounds_pct: f64,
    pub rescaled_error_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub property_name: String,
    pub dataset_hash: String,
    pub split_seed: u64,
    pub n_test: usize,
    /// Sorted by method name.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# property={} dataset_hash={} split_seed={} n_test={}\n",
            self.property_name, self.dataset_hash, self.split_seed, self.n_test
        );
        out.push_str("method,base_mae,error_mae,inbounds_pct,scale_factor,rescaled_inbounds_pct,rescaled_error_mae\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?},{:?}",
                r.method,
                r.base_mae,
                r.error_mae,
                r.inbounds_pct,
                r.scale_factor,
                r.rescaled_inbounds_pct,
                r.rescaled_error_mae
            );
        }
        out
    }
}

/// Tabulates reports that were evaluated on the same test partition and
/// writes `comparison.csv` and `comparison.json` to `out` when given.
pub fn cmd_compare(report_paths: &[PathBuf], out: Option<&Path>) -> Result<Comparison> {
    if report_paths.len() < 2 {
        return Err(UqError::InvalidConfig("compare needs at least two reports".into()));
    }
    let reports = report_paths
        .iter()
        .map(|p| Ok(serde_json::from_str::<UqReport>(&std::fs::read_to_string(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    let first = &reports[0];
    for (r, path) in reports.iter().zip(report_paths).skip(1) {
        let what = if r.provenance.dataset_hash != first.provenance.dataset_hash {
            "dataset hash"
        } else if r.provenance.split_seed != first.provenance.split_seed {
            "split seed"
        } else if r.property_name != first.property_name {
            "property"
        } else if r.n_test != first.n_test {
            "test size"
        } else {
            continue;
        };
        return Err(UqError::MismatchedPartitions(format!(
            "{} differs in {what} from {}",
            path.display(),
            report_paths[0].display()
        )));
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            method: r.method,
            base_mae: r.base_mae,
            error_mae: r.error_mae,
            inbounds_pct: r.inbounds_pct,
            scale_factor: r.scale_factor,
            rescaled_inbounds_pct: r.rescaled_inbounds_pct,
            rescaled_error_mae: r.rescaled_error_mae,
        })
        .collect();
    rows.sort_by(|a, b| a.method.as_str().cmp(b.method.as_str()));
    let table = Comparison {
        property_name: first.property_name.clone(),
        dataset_hash: first.provenance.dataset_hash.clone(),
        split_seed: first.provenance.split_seed,
        n_test: first.n_test,
        rows,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.csv"), table.to_csv())?;
        write_json(&dir.join("comparison.json"), &table)?;
    }
    Ok(table)
}
