//! Gaussian-process regression: composite kernel, marginal-likelihood
//! fitting with a bound-constrained quasi-Newton optimiser, and per-point
//! posterior mean and standard deviation.
//!
//! Features and targets are standardised before fitting (zero prior mean on
//! the standardised targets); all public outputs are in raw target units.

pub mod kernel;
pub mod lbfgsb;
mod model;

pub use kernel::{KernelExpr, KernelTerm, Param};
pub use lbfgsb::{lbfgsb_minimize, LbfgsbOptions, OptimResult};
pub use model::{
    fit_gp, gp_posterior, gram, log_marginal_likelihood, GpFitOptions, GpModel, Jitter, Posterior,
    Scaling, ScalingMode, MAX_GP_FEATURES,
};
