//! Per-prediction uncertainty for tabular regression.
//!
//! Three interval constructors share one currency, [`uq::PredictionInterval`]:
//!
//! * quantile triads of boosted trees (pinball loss at a low and a high
//!   level around a squared-error centre),
//! * "3split" learned error models, where a second regressor predicts the
//!   absolute or squared residual of a base regressor,
//! * Gaussian-process posteriors with a composite ARD / rational-quadratic /
//!   periodic / white-noise kernel.
//!
//! The [`uq`] module then measures in-bounds coverage, rescales intervals to
//! a coverage target and exports plot-ready residual histograms; [`cli`]
//! wires everything into reproducible experiment runs.

pub mod boosting;
pub mod cli;
pub mod data;
pub mod error;
pub mod forest;
pub mod gp;
pub mod loss;
pub mod model;
pub mod stats;
pub mod synth;
pub mod tree;
pub mod uq;

pub use error::{Result, UqError};
