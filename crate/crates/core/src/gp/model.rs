use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::KernelExpr;
use super::lbfgsb::{lbfgsb_minimize, LbfgsbOptions};
use crate::boosting::check_width;
use crate::data::Dataset;
use crate::error::{Result, UqError};
use crate::stats;

pub const MAX_GP_FEATURES: usize = 64;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Diagonal jitter schedule, relative to the mean diagonal `trace(K)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub start: f64,
    pub max: f64,
    pub factor: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            start: 1e-10,
            max: 1e-4,
            factor: 10.0,
        }
    }
}

impl Jitter {
    /// Factorise the matrix as given, with no diagonal boost.
    pub fn none() -> Self {
        Jitter {
            start: 0.0,
            max: 0.0,
            factor: 10.0,
        }
    }
}

/// Cholesky factor of `K + jitter·I` and the absolute jitter that worked.
pub(crate) fn factorize(k: &DMatrix<f64>, policy: &Jitter) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mean_diag = k.trace() / n.max(1) as f64;
    let mut rel = policy.start;
    loop {
        let jitter = rel * mean_diag;
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            if chol.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((chol, jitter));
            }
        }
        if rel <= 0.0 || rel >= policy.max {
            return Err(UqError::CholeskyFailure);
        }
        rel = (rel * policy.factor).min(policy.max);
    }
}

pub(crate) fn factorize_exact(k: &DMatrix<f64>, jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut m = k.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += jitter;
    }
    Cholesky::new(m).ok_or(UqError::CholeskyFailure)
}

/// Training Gram matrix, white noise on the diagonal only.
pub fn gram(kernel: &KernelExpr, x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let white = kernel.white_variance();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = kernel.stationary(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] = kernel.stationary(&x[i], &x[i]) + white;
    }
    k
}

/// Log marginal likelihood of `y` under a zero-mean GP with `kernel`, and
/// its gradient over the kernel's free parameters (log coordinates for
/// log-scale parameters).
pub fn log_marginal_likelihood(
    kernel: &KernelExpr,
    x: &[Vec<f64>],
    y: &[f64],
    jitter: &Jitter,
) -> Result<(f64, Vec<f64>)> {
    crate::error::check_len(x.len(), y.len())?;
    if y.is_empty() {
        return Err(UqError::EmptyInput);
    }
    if let (Some(dim), Some(row)) = (kernel.ard_dim(), x.first()) {
        if row.len() != dim {
            return Err(UqError::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
    }
    let n = y.len();
    let k = gram(kernel, x);
    let (chol, _) = factorize(&k, jitter)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * n as f64 * LN_2PI;

    // ∂/∂θ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);
    let grad = kernel
        .contract_gradient(x, &w)
        .into_iter()
        .map(|g| 0.5 * g)
        .collect();
    Ok((value, grad))
}

/// Affine maps between raw units and the units the GP works in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

/// Scales below this are treated as zero and replaced by 1.
const SCALE_FLOOR: f64 = 1e-12;

impl Scaling {
    pub fn identity(d: usize) -> Self {
        Scaling {
            x_mean: vec![0.0; d],
            x_scale: vec![1.0; d],
            y_mean: 0.0,
            y_scale: 1.0,
        }
    }

    /// Per-column z-scores for features, mean/std for targets.
    pub fn standardize(data: &Dataset) -> Self {
        let floor = |s: f64| if s > SCALE_FLOOR { s } else { 1.0 };
        let d = data.n_features();
        let mut x_mean = Vec::with_capacity(d);
        let mut x_scale = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = data.features.iter().map(|r| r[j]).collect();
            x_mean.push(stats::mean(&col));
            x_scale.push(floor(stats::std_dev(&col)));
        }
        Scaling {
            x_mean,
            x_scale,
            y_mean: stats::mean(&data.targets),
            y_scale: floor(stats::std_dev(&data.targets)),
        }
    }

    pub fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.x_mean)
            .zip(&self.x_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    Standardize,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub jitter: Jitter,
    pub scaling: ScalingMode,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            restarts: 5,
            seed: 0,
            max_iter: 200,
            jitter: Jitter::default(),
            scaling: ScalingMode::Standardize,
        }
    }
}

/// A GP conditioned on training data. Kernel parameters live in scaled
/// units; queries and outputs are in raw units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpRecord", try_from = "GpRecord")]
pub struct GpModel {
    pub kernel: KernelExpr,
    pub feature_names: Vec<String>,
    pub scaling: Scaling,
    /// Scaled training inputs.
    pub x_train: Vec<Vec<f64>>,
    /// Scaled training targets.
    pub y_train: Vec<f64>,
    pub log_marginal_likelihood: f64,
    /// Absolute diagonal jitter added before factorisation.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct GpRecord {
    kernel: KernelExpr,
    feature_names: Vec<String>,
    scaling: Scaling,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    log_marginal_likelihood: f64,
    jitter: f64,
}

impl From<GpModel> for GpRecord {
    fn from(m: GpModel) -> Self {
        GpRecord {
            kernel: m.kernel,
            feature_names: m.feature_names,
            scaling: m.scaling,
            x_train: m.x_train,
            y_train: m.y_train,
            log_marginal_likelihood: m.log_marginal_likelihood,
            jitter: m.jitter,
        }
    }
}

impl TryFrom<GpRecord> for GpModel {
    type Error = UqError;

    fn try_from(r: GpRecord) -> Result<Self> {
        let chol = factorize_exact(&gram(&r.kernel, &r.x_train), r.jitter)?;
        let alpha = chol.solve(&DVector::from_column_slice(&r.y_train));
        Ok(GpModel {
            kernel: r.kernel,
            feature_names: r.feature_names,
            scaling: r.scaling,
            x_train: r.x_train,
            y_train: r.y_train,
            log_marginal_likelihood: r.log_marginal_likelihood,
            jitter: r.jitter,
            chol,
            alpha,
        })
    }
}

/// Posterior of the latent function at a set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Queries whose computed variance was negative and clipped to zero.
    pub clipped: usize,
}

impl GpModel {
    /// Conditions `kernel` on `train` without optimising anything.
    pub fn condition(
        train: &Dataset,
        kernel: KernelExpr,
        mode: ScalingMode,
        jitter: &Jitter,
    ) -> Result<Self> {
        if train.n_samples() == 0 {
            return Err(UqError::EmptyInput);
        }
        let kernel = kernel.fit_to_dims(train.n_features())?;
        kernel.validate()?;
        let scaling = match mode {
            ScalingMode::Standardize => Scaling::standardize(train),
            ScalingMode::Identity => Scaling::identity(train.n_features()),
        };
        let x_train: Vec<Vec<f64>> = train.features.iter().map(|r| scaling.scale_row(r)).collect();
        let y_train: Vec<f64> = train.targets.iter().map(|&y| scaling.scale_target(y)).collect();
        let (lml, _) = log_marginal_likelihood(&kernel, &x_train, &y_train, jitter)?;
        let k = gram(&kernel, &x_train);
        let (chol, jitter) = factorize(&k, jitter)?;
        let alpha = chol.solve(&DVector::from_column_slice(&y_train));
        Ok(GpModel {
            kernel,
            feature_names: train.feature_names.clone(),
            scaling,
            x_train,
            y_train,
            log_marginal_likelihood: lml,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Latent posterior mean and standard deviation, in target units.
    pub fn posterior(&self, queries: &[Vec<f64>]) -> Result<Posterior> {
        check_width(queries, self.n_features())?;
        let n = self.x_train.len();
        let mut means = Vec::with_capacity(queries.len());
        let mut stds = Vec::with_capacity(queries.len());
        let mut clipped = 0;
        for q in queries {
            let q = self.scaling.scale_row(q);
            let kstar = DVector::from_iterator(
                n,
                self.x_train.iter().map(|x| self.kernel.stationary(&q, x)),
            );
            let mean = kstar.dot(&self.alpha);
            let v = self
                .chol
                .l_dirty()
                .solve_lower_triangular(&kstar)
                .expect("Cholesky factor has a positive diagonal");
            let mut var = self.kernel.stationary(&q, &q) - v.norm_squared();
            if var < 0.0 {
                clipped += 1;
                var = 0.0;
            }
            means.push(self.scaling.y_mean + self.scaling.y_scale * mean);
            stds.push(self.scaling.y_scale * var.sqrt());
        }
        if clipped > 0 {
            log::warn!("{clipped} posterior variances were negative and clipped to 0");
        }
        Ok(Posterior {
            means,
            stds,
            clipped,
        })
    }

    /// Posterior predictive for a new observation: the latent posterior
    /// plus the kernel's white-noise variance.
    pub fn predictive(&self, queries: &[Vec<f64>]) -> Result<Posterior> {
        let mut post = self.posterior(queries)?;
        let noise = self.kernel.white_variance() * self.scaling.y_scale.powi(2);
        for s in &mut post.stds {
            *s = (*s * *s + noise).sqrt();
        }
        Ok(post)
    }
}

pub fn gp_posterior(model: &GpModel, queries: &[Vec<f64>]) -> Result<Posterior> {
    model.posterior(queries)
}

/// Fits kernel hyperparameters by maximising the log marginal likelihood
/// with multi-start L-BFGS-B, then conditions on `train`.
///
/// Restart 0 starts from the template's values; the others draw each free
/// parameter log-uniformly (or uniformly for linear ones) within its
/// bounds. The best restart by likelihood wins, earliest on ties.
pub fn fit_gp(train: &Dataset, template: &KernelExpr, options: &GpFitOptions) -> Result<GpModel> {
    let d = train.n_features();
    if d > MAX_GP_FEATURES {
        return Err(UqError::TooManyFeatures {
            got: d,
            max: MAX_GP_FEATURES,
        });
    }
    if train.n_samples() == 0 {
        return Err(UqError::EmptyInput);
    }
    let template = template.clone().fit_to_dims(d)?;
    template.validate()?;
    let scaling = match options.scaling {
        ScalingMode::Standardize => Scaling::standardize(train),
        ScalingMode::Identity => Scaling::identity(d),
    };
    let x: Vec<Vec<f64>> = train.features.iter().map(|r| scaling.scale_row(r)).collect();
    let y: Vec<f64> = train.targets.iter().map(|&v| scaling.scale_target(v)).collect();

    let bounds = template.free_bounds();
    let x0 = template.free_vector();
    let lbfgs = LbfgsbOptions {
        max_iter: options.max_iter,
        ..Default::default()
    };
    let restarts = options.restarts.max(1);

    let outcomes: Vec<Option<(f64, Vec<f64>)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                x0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(r as u64);
                bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
            };
            let mut kernel = template.clone();
            let objective = |theta: &[f64]| {
                kernel.set_free_vector(theta);
                let (v, g) = log_marginal_likelihood(&kernel, &x, &y, &options.jitter)?;
                Ok((-v, g.into_iter().map(|gi| -gi).collect()))
            };
            match lbfgsb_minimize(objective, &start, &bounds, &lbfgs) {
                Ok(res) => Some((-res.value, res.x)),
                Err(e) => {
                    log::debug!("restart {r} abandoned: {e}");
                    None
                }
            }
        })
        .collect();

    let best = outcomes
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, Vec<f64>)>, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .ok_or(UqError::CholeskyFailure)?;

    let mut kernel = template;
    kernel.set_free_vector(&best.1);
    let k = gram(&kernel, &x);
    let (chol, jitter) = factorize(&k, &options.jitter)?;
    let alpha = chol.solve(&DVector::from_column_slice(&y));
    Ok(GpModel {
        kernel,
        feature_names: train.feature_names.clone(),
        scaling,
        x_train: x,
        y_train: y,
        log_marginal_likelihood: best.0,
        jitter,
        chol,
        alpha,
    })
}
