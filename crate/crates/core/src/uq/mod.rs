//! Interval construction, coverage measurement, calibration, descriptor
//! selection and residual histograms.

mod coverage;
mod descriptors;
mod histogram;
mod interval;
mod report;

pub use coverage::{
    calibrate_scale, inbounds_flags, inbounds_percentage, rescale, Calibration, InboundsMode,
};
pub use descriptors::{intersect_top_features, select_descriptors};
pub use histogram::{residual_histogram, Histogram};
pub use interval::{
    gp_intervals, quantile_intervals, threesplit_intervals, ErrorTargetKind, Method,
    PredictionInterval, QuantileRun, ThreeSplitRun, TriadConfig,
};
pub use report::{Provenance, UqReport, REPORT_CSV_HEADER, TARGET_INBOUNDS_PCT};
