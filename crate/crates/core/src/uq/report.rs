use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::coverage::{calibrate_scale, inbounds_percentage, rescale, InboundsMode};
use super::interval::{Method, PredictionInterval};
use crate::error::{check_len, Result};
use crate::stats;

pub const TARGET_INBOUNDS_PCT: f64 = 68.0;

/// Where a report came from; enough to decide whether two reports were
/// evaluated on the same test partition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub dataset_hash: String,
    pub split_seed: u64,
    pub seeds: BTreeMap<String, u64>,
}

/// Population summary of one method's intervals on a held-out set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqReport {
    pub property_name: String,
    pub method: Method,
    /// MAE of the interval centres against the observations.
    pub base_mae: f64,
    /// MAE of the half widths against `|observed − center|`.
    pub error_mae: f64,
    pub inbounds_pct: f64,
    /// Factor bringing the in-bounds percentage closest to 68 %.
    pub scale_factor: f64,
    pub n_test: usize,
    pub rescaled_inbounds_pct: f64,
    pub rescaled_error_mae: f64,
    /// Coverage on the second half of the test slice at the factor fitted
    /// on its first half; absent for fewer than 20 test rows.
    pub heldout_inbounds_pct: Option<f64>,
    pub provenance: Provenance,
}

pub const REPORT_CSV_HEADER: &str = "property,method,base_mae,error_mae,inbounds_pct,scale_factor,n_test";

impl UqReport {
    pub fn evaluate(
        property_name: &str,
        method: Method,
        intervals: &[PredictionInterval],
        observed: &[f64],
        provenance: Provenance,
    ) -> Result<Self> {
        check_len(intervals.len(), observed.len())?;
        let centers: Vec<f64> = intervals.iter().map(|iv| iv.center).collect();
        let exact_errors: Vec<f64> = centers.iter().zip(observed).map(|(c, y)| (y - c).abs()).collect();
        let widths: Vec<f64> = intervals.iter().map(|iv| iv.half_width).collect();
        let inbounds_pct = inbounds_percentage(intervals, observed, InboundsMode::Symmetric)?;
        let cal = calibrate_scale(intervals, observed, TARGET_INBOUNDS_PCT)?;
        let scaled_widths: Vec<f64> = widths.iter().map(|w| w * cal.scale).collect();

        let n = intervals.len();
        let heldout_inbounds_pct = if n >= 20 {
            let half = n / 2;
            let fit = calibrate_scale(&intervals[..half], &observed[..half], TARGET_INBOUNDS_PCT)?;
            Some(inbounds_percentage(
                &rescale(&intervals[half..], fit.scale),
                &observed[half..],
                InboundsMode::Symmetric,
            )?)
        } else {
            None
        };

        Ok(UqReport {
            property_name: property_name.to_string(),
            method,
            base_mae: stats::mae(&centers, observed),
            error_mae: stats::mae(&widths, &exact_errors),
            inbounds_pct,
            scale_factor: cal.scale,
            n_test: n,
            rescaled_inbounds_pct: cal.inbounds_pct,
            rescaled_error_mae: stats::mae(&scaled_widths, &exact_errors),
            heldout_inbounds_pct,
            provenance,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?},{}",
            self.property_name,
            self.method,
            self.base_mae,
            self.error_mae,
            self.inbounds_pct,
            self.scale_factor,
            self.n_test
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_by_hand() {
        let ivs = vec![
            PredictionInterval::symmetric(0.0, 1.0, Method::Gp),
            PredictionInterval::symmetric(1.0, 0.5, Method::Gp),
            PredictionInterval::symmetric(2.0, 2.0, Method::Gp),
        ];
        let obs = [0.5, 2.0, 2.0];
        let r = UqReport::evaluate("p", Method::Gp, &ivs, &obs, Provenance::default()).unwrap();
        assert!((r.base_mae - 0.5).abs() < 1e-15);
        // |1 − 0.5| + |0.5 − 1| + |2 − 0| over 3.
        assert!((r.error_mae - 1.0).abs() < 1e-15);
        assert!((r.inbounds_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.n_test, 3);
        assert!(r.heldout_inbounds_pct.is_none());
        assert!(r.csv_row().starts_with("p,gp,0.5,1.0,"));
    }
}
