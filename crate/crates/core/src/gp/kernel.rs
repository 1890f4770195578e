//! Composite covariance function
//!
//! `k(x, x') = c1·RBF_ARD(λ₁…λ_N) + c2·RQ(α, ℓ) + c3·RBF(ℓ′)·ExpSineSquared(ℓ″, p) + c4·White(noise)`
//!
//! Any subset of the four terms may be present. A term whose `c` is fixed at
//! zero is switched off and none of its parameters are optimised.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};

pub const DEFAULT_LOWER: f64 = 1e-5;
pub const DEFAULT_UPPER: f64 = 1e5;

/// A positive kernel hyperparameter with box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr", into = "ParamRepr")]
pub struct Param {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Optimise `ln(value)` rather than `value`.
    pub log_scale: bool,
    pub fixed: bool,
}

impl Param {
    pub fn new(value: f64) -> Self {
        Param {
            value,
            lower: DEFAULT_LOWER,
            upper: DEFAULT_UPPER,
            log_scale: true,
            fixed: false,
        }
    }

    pub fn fixed(value: f64) -> Self {
        Param {
            fixed: true,
            ..Param::new(value)
        }
    }

    pub fn bounded(value: f64, lower: f64, upper: f64) -> Self {
        Param {
            lower,
            upper,
            ..Param::new(value)
        }
    }

    fn to_free(&self) -> f64 {
        if self.log_scale {
            self.value.ln()
        } else {
            self.value
        }
    }

    fn value_from_free(&self, t: f64) -> f64 {
        if self.log_scale {
            t.exp()
        } else {
            t
        }
    }

    fn free_bounds(&self) -> (f64, f64) {
        if self.log_scale {
            (self.lower.ln(), self.upper.ln())
        } else {
            (self.lower, self.upper)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.lower > 0.0
            && self.lower <= self.upper
            && self.value.is_finite()
            && (self.fixed || (self.value >= self.lower && self.value <= self.upper));
        if !ok {
            return Err(UqError::InvalidConfig(format!(
                "parameter `{name}` = {} outside its bounds [{}, {}]",
                self.value, self.lower, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamRepr {
    Value(f64),
    Full {
        value: f64,
        #[serde(default)]
        bounds: Option<[f64; 2]>,
        #[serde(default)]
        fixed: bool,
        #[serde(default = "yes")]
        log_scale: bool,
    },
}

fn yes() -> bool {
    true
}

impl TryFrom<ParamRepr> for Param {
    type Error = String;

    fn try_from(repr: ParamRepr) -> std::result::Result<Self, String> {
        Ok(match repr {
            ParamRepr::Value(v) => Param::new(v),
            ParamRepr::Full {
                value,
                bounds,
                fixed,
                log_scale,
            } => {
                let [lower, upper] = bounds.unwrap_or([DEFAULT_LOWER, DEFAULT_UPPER]);
                if !(lower > 0.0 && lower <= upper) {
                    return Err(format!("invalid bounds [{lower}, {upper}]"));
                }
                Param {
                    value,
                    lower,
                    upper,
                    log_scale,
                    fixed,
                }
            }
        })
    }
}

impl From<Param> for ParamRepr {
    fn from(p: Param) -> Self {
        ParamRepr::Full {
            value: p.value,
            bounds: Some([p.lower, p.upper]),
            fixed: p.fixed,
            log_scale: p.log_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelTerm {
    /// `c · exp(−½ Σᵢ (xᵢ − x'ᵢ)² / λᵢ²)`
    RbfArd { c: Param, lambda: Vec<Param> },
    /// `c · (1 + r² / (2 α ℓ²))^(−α)`
    Rq {
        c: Param,
        alpha: Param,
        length: Param,
    },
    /// `c · exp(−r² / (2 ℓ′²)) · exp(−2 Σᵢ sin²(π |xᵢ − x'ᵢ| / p) / ℓ″²)`; the
    /// periodic factor is taken per coordinate so the product stays positive
    /// semi-definite in any dimension.
    PeriodicRbf {
        c: Param,
        rbf_length: Param,
        periodic_length: Param,
        period: Param,
    },
    /// `c · noise` on the diagonal, zero elsewhere.
    WhiteNoise { c: Param, noise: Param },
}

impl KernelTerm {
    pub fn rbf_ard(c: f64, lambda: &[f64]) -> Self {
        KernelTerm::RbfArd {
            c: Param::new(c),
            lambda: lambda.iter().map(|&l| Param::new(l)).collect(),
        }
    }

    pub fn rq(c: f64, alpha: f64, length: f64) -> Self {
        KernelTerm::Rq {
            c: Param::new(c),
            alpha: Param::new(alpha),
            length: Param::new(length),
        }
    }

    pub fn periodic_rbf(c: f64, rbf_length: f64, periodic_length: f64, period: f64) -> Self {
        KernelTerm::PeriodicRbf {
            c: Param::new(c),
            rbf_length: Param::new(rbf_length),
            periodic_length: Param::new(periodic_length),
            period: Param::new(period),
        }
    }

    pub fn white_noise(c: f64, noise: f64) -> Self {
        KernelTerm::WhiteNoise {
            c: Param::new(c),
            noise: Param::new(noise),
        }
    }

    fn scale(&self) -> &Param {
        match self {
            KernelTerm::RbfArd { c, .. }
            | KernelTerm::Rq { c, .. }
            | KernelTerm::PeriodicRbf { c, .. }
            | KernelTerm::WhiteNoise { c, .. } => c,
        }
    }

    pub fn is_enabled(&self) -> bool {
        let c = self.scale();
        !(c.fixed && c.value == 0.0)
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            KernelTerm::RbfArd { c, lambda } => std::iter::once(c).chain(lambda).collect(),
            KernelTerm::Rq { c, alpha, length } => vec![c, alpha, length],
            KernelTerm::PeriodicRbf {
                c,
                rbf_length,
                periodic_length,
                period,
            } => vec![c, rbf_length, periodic_length, period],
            KernelTerm::WhiteNoise { c, noise } => vec![c, noise],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            KernelTerm::RbfArd { c, lambda } => std::iter::once(c).chain(lambda).collect(),
            KernelTerm::Rq { c, alpha, length } => vec![c, alpha, length],
            KernelTerm::PeriodicRbf {
                c,
                rbf_length,
                periodic_length,
                period,
            } => vec![c, rbf_length, periodic_length, period],
            KernelTerm::WhiteNoise { c, noise } => vec![c, noise],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            KernelTerm::RbfArd { .. } => "rbf_ard",
            KernelTerm::Rq { .. } => "rq",
            KernelTerm::PeriodicRbf { .. } => "periodic_rbf",
            KernelTerm::WhiteNoise { .. } => "white_noise",
        }
    }

    /// Stationary value for a pair of distinct inputs (white noise is 0).
    fn value(&self, x: &[f64], x2: &[f64]) -> f64 {
        if !self.is_enabled() {
            return 0.0;
        }
        match self {
            KernelTerm::RbfArd { c, lambda } => {
                let q: f64 = x
                    .iter()
                    .zip(x2)
                    .zip(lambda)
                    .map(|((a, b), l)| ((a - b) / l.value).powi(2))
                    .sum();
                c.value * (-0.5 * q).exp()
            }
            KernelTerm::Rq { c, alpha, length } => {
                let r2 = sq_dist(x, x2);
                let base = 1.0 + r2 / (2.0 * alpha.value * length.value.powi(2));
                c.value * base.powf(-alpha.value)
            }
            KernelTerm::PeriodicRbf {
                c,
                rbf_length,
                periodic_length,
                period,
            } => {
                let r2 = sq_dist(x, x2);
                let s2 = sin_sq_sum(x, x2, period.value);
                c.value
                    * (-r2 / (2.0 * rbf_length.value.powi(2)) - 2.0 * s2 / periodic_length.value.powi(2))
                        .exp()
            }
            KernelTerm::WhiteNoise { .. } => 0.0,
        }
    }

    fn white_variance(&self) -> f64 {
        match self {
            KernelTerm::WhiteNoise { c, noise } if self.is_enabled() => c.value * noise.value,
            _ => 0.0,
        }
    }

    /// Derivatives of this term's value with respect to `ln θ` for each of
    /// its parameters, in [`KernelTerm::params`] order. `same` marks a
    /// diagonal Gram entry.
    fn log_gradient(&self, x: &[f64], x2: &[f64], same: bool, out: &mut Vec<f64>) {
        out.clear();
        match self {
            KernelTerm::RbfArd { lambda, .. } => {
                let k = self.value(x, x2);
                out.push(k);
                for ((a, b), l) in x.iter().zip(x2).zip(lambda) {
                    out.push(k * ((a - b) / l.value).powi(2));
                }
            }
            KernelTerm::Rq { c, alpha, length } => {
                let r2 = sq_dist(x, x2);
                let (a, l2) = (alpha.value, length.value.powi(2));
                let base = 1.0 + r2 / (2.0 * a * l2);
                let k = c.value * base.powf(-a);
                out.push(k);
                out.push(k * a * (-base.ln() + (base - 1.0) / base));
                out.push(c.value * base.powf(-a - 1.0) * r2 / l2);
            }
            KernelTerm::PeriodicRbf {
                rbf_length,
                periodic_length,
                period,
                ..
            } => {
                let r2 = sq_dist(x, x2);
                let pl2 = periodic_length.value.powi(2);
                let (mut s2, mut sca) = (0.0, 0.0);
                for (a, b) in x.iter().zip(x2) {
                    let arg = PI * (a - b).abs() / period.value;
                    let (s, co) = arg.sin_cos();
                    s2 += s * s;
                    sca += s * co * arg;
                }
                let k = self.value(x, x2);
                out.push(k);
                out.push(k * r2 / rbf_length.value.powi(2));
                out.push(k * 4.0 * s2 / pl2);
                out.push(k * 4.0 * sca / pl2);
            }
            KernelTerm::WhiteNoise { .. } => {
                let k = if same { self.white_variance() } else { 0.0 };
                out.push(k);
                out.push(k);
            }
        }
    }
}

/// `Σᵢ sin²(π |xᵢ − x'ᵢ| / p)`
fn sin_sq_sum(x: &[f64], x2: &[f64], period: f64) -> f64 {
    x.iter()
        .zip(x2)
        .map(|(a, b)| (PI * (a - b).abs() / period).sin().powi(2))
        .sum()
}

fn sq_dist(x: &[f64], x2: &[f64]) -> f64 {
    x.iter().zip(x2).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Sum of [`KernelTerm`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExpr {
    pub terms: Vec<KernelTerm>,
}

impl KernelExpr {
    pub fn new(terms: Vec<KernelTerm>) -> Self {
        KernelExpr { terms }
    }

    /// The default template: ARD RBF plus white noise, unit values.
    pub fn default_for(n_features: usize) -> Self {
        KernelExpr::new(vec![
            KernelTerm::rbf_ard(1.0, &vec![1.0; n_features]),
            KernelTerm::white_noise(1.0, 0.1),
        ])
    }

    /// ARD dimension, if the kernel has an ARD term.
    pub fn ard_dim(&self) -> Option<usize> {
        self.terms.iter().find_map(|t| match t {
            KernelTerm::RbfArd { lambda, .. } => Some(lambda.len()),
            _ => None,
        })
    }

    /// Broadcasts a single ARD length scale to `n` dimensions; any other
    /// length that differs from `n` is an error.
    pub fn fit_to_dims(mut self, n: usize) -> Result<Self> {
        for term in &mut self.terms {
            if let KernelTerm::RbfArd { lambda, .. } = term {
                if lambda.len() == 1 && n != 1 {
                    *lambda = vec![lambda[0].clone(); n];
                } else if lambda.len() != n {
                    return Err(UqError::DimensionMismatch {
                        expected: n,
                        got: lambda.len(),
                    });
                }
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(UqError::InvalidConfig("kernel has no terms".into()));
        }
        for term in self.terms.iter().filter(|t| t.is_enabled()) {
            for p in term.params() {
                p.validate(term.name())?;
            }
        }
        Ok(())
    }

    fn free_params(&self) -> impl Iterator<Item = &Param> {
        self.terms
            .iter()
            .filter(|t| t.is_enabled())
            .flat_map(|t| t.params())
            .filter(|p| !p.fixed)
    }

    pub fn n_free(&self) -> usize {
        self.free_params().count()
    }

    /// Free parameters in optimiser coordinates (log for log-scale ones).
    pub fn free_vector(&self) -> Vec<f64> {
        self.free_params().map(Param::to_free).collect()
    }

    pub fn free_bounds(&self) -> Vec<(f64, f64)> {
        self.free_params().map(Param::free_bounds).collect()
    }

    /// Writes optimiser coordinates back into the parameter values.
    pub fn set_free_vector(&mut self, theta: &[f64]) {
        let mut it = theta.iter();
        for term in self.terms.iter_mut().filter(|t| t.is_enabled()) {
            for p in term.params_mut().into_iter().filter(|p| !p.fixed) {
                let t = *it.next().expect("theta has one entry per free parameter");
                p.value = p.value_from_free(t);
            }
        }
    }

    fn check_dims(&self, x: &[f64], x2: &[f64]) -> Result<()> {
        if x.len() != x2.len() {
            return Err(UqError::DimensionMismatch {
                expected: x.len(),
                got: x2.len(),
            });
        }
        if let Some(n) = self.ard_dim() {
            if n != x.len() {
                return Err(UqError::DimensionMismatch {
                    expected: n,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Kernel value for two inputs. The white-noise term contributes when
    /// the inputs are identical.
    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_dims(x, x2)?;
        let white = if x == x2 { self.white_variance() } else { 0.0 };
        Ok(self.stationary(x, x2) + white)
    }

    pub(crate) fn stationary(&self, x: &[f64], x2: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x, x2)).sum()
    }

    /// Total white-noise variance `Σ c·noise`.
    pub fn white_variance(&self) -> f64 {
        self.terms.iter().map(KernelTerm::white_variance).sum()
    }

    /// Gradient of `Σ_ab W_ab K_ab` over the free parameters, where `K` is
    /// the training Gram matrix on `x` and `w` is symmetric.
    pub(crate) fn contract_gradient(&self, x: &[Vec<f64>], w: &nalgebra::DMatrix<f64>) -> Vec<f64> {
        let n = x.len();
        let mut grad = vec![0.0; self.n_free()];
        let mut buf = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let weight = if i == j { w[(i, i)] } else { 2.0 * w[(i, j)] };
                if weight == 0.0 {
                    continue;
                }
                let mut slot = 0;
                for term in self.terms.iter().filter(|t| t.is_enabled()) {
                    term.log_gradient(&x[i], &x[j], i == j, &mut buf);
                    for (p, dk) in term.params().into_iter().zip(&buf) {
                        if p.fixed {
                            continue;
                        }
                        let d = if p.log_scale { *dk } else { dk / p.value };
                        grad[slot] += weight * d;
                        slot += 1;
                    }
                }
            }
        }
        grad
    }
}
