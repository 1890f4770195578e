//! Residual histograms as plot-ready data.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, UqError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` uniformly spaced edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values outside the range that were folded into the edge bins.
    pub clamped: usize,
}

impl Histogram {
    /// `bin_lo,bin_hi,count` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:?},{:?},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Bins `predicted − reference`. Without an explicit range the observed
/// min/max are used (widened by ±0.5 when all residuals coincide). Every
/// bin is half-open except the last, which includes the upper edge.
pub fn residual_histogram(
    predicted: &[f64],
    reference: &[f64],
    n_bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    check_len(predicted.len(), reference.len())?;
    if n_bins == 0 {
        return Err(UqError::InvalidConfig("histogram needs at least one bin".into()));
    }
    let residuals: Vec<f64> = predicted.iter().zip(reference).map(|(p, r)| p - r).collect();
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(UqError::InvalidConfig(format!("invalid histogram range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => {
            let finite = residuals.iter().copied().filter(|v| v.is_finite());
            let lo = finite.clone().fold(f64::INFINITY, f64::min);
            let hi = finite.fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (-0.5, 0.5)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| if i == n_bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; n_bins];
    let mut clamped = 0;
    for r in residuals {
        let bin = if r.is_nan() || r < lo {
            clamped += 1;
            0
        } else if r > hi {
            clamped += 1;
            n_bins - 1
        } else {
            let mut b = (((r - lo) / width) as usize).min(n_bins - 1);
            while b > 0 && r < edges[b] {
                b -= 1;
            }
            while b + 1 < n_bins && r >= edges[b + 1] {
                b += 1;
            }
            b
        };
        counts[bin] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        clamped,
    })
}
