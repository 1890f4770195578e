//! The three interval constructors.

use serde::{Deserialize, Serialize};

use crate::boosting::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::data::{Dataset, SplitKind, SplitPlan};
use crate::error::{Result, UqError};
use crate::gp::GpModel;
use crate::loss::Objective;
use crate::model::{Engine, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "quantile")]
    Quantile,
    #[serde(rename = "threesplit-l1")]
    ThreeSplitL1,
    #[serde(rename = "threesplit-l2")]
    ThreeSplitL2,
    #[serde(rename = "gp")]
    Gp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Quantile => "quantile",
            Method::ThreeSplitL1 => "threesplit-l1",
            Method::ThreeSplitL2 => "threesplit-l2",
            Method::Gp => "gp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(Method::Quantile),
            "threesplit-l1" => Ok(Method::ThreeSplitL1),
            "threesplit-l2" => Ok(Method::ThreeSplitL2),
            "gp" => Ok(Method::Gp),
            other => Err(UqError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// A symmetric interval `center ± half_width` in target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub half_width: f64,
    pub method: Method,
    /// Un-symmetrised quantile bounds (quantile method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_upper: Option<f64>,
}

impl PredictionInterval {
    pub fn symmetric(center: f64, half_width: f64, method: Method) -> Self {
        PredictionInterval {
            center,
            half_width: half_width.max(0.0),
            method,
            raw_lower: None,
            raw_upper: None,
        }
    }

    /// Interval from the LOWER and UPPER quantile predictions around the
    /// MID prediction; the half width is half the bound span, whichever way
    /// round the bounds are.
    pub fn from_quantiles(center: f64, lower: f64, upper: f64) -> Self {
        PredictionInterval {
            center,
            half_width: (upper - lower).abs() / 2.0,
            method: Method::Quantile,
            raw_lower: Some(lower),
            raw_upper: Some(upper),
        }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PredictionInterval {
            half_width: self.half_width * factor,
            ..self.clone()
        }
    }
}

/// Hyperparameters for the LOWER, MID and UPPER models. Their objectives
/// are overridden by [`quantile_intervals`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriadConfig {
    pub lower: GbdtConfig,
    pub mid: GbdtConfig,
    pub upper: GbdtConfig,
}

pub struct QuantileRun {
    pub lower: GbdtModel,
    pub mid: GbdtModel,
    pub upper: GbdtModel,
    pub intervals: Vec<PredictionInterval>,
    /// Test rows where the upper prediction fell below the lower one.
    pub crossings: usize,
}

/// Quantile triad: LOWER = pinball(`alpha_lo`), MID = squared error,
/// UPPER = pinball(`alpha_hi`), each fit independently on `train`.
pub fn quantile_intervals(
    train: &Dataset,
    test: &Dataset,
    alpha_lo: f64,
    alpha_hi: f64,
    configs: &TriadConfig,
) -> Result<QuantileRun> {
    if !(alpha_lo > 0.0 && alpha_lo < alpha_hi && alpha_hi < 1.0) {
        return Err(UqError::InvalidConfig(format!(
            "need 0 < alpha_lo < alpha_hi < 1, got {alpha_lo} and {alpha_hi}"
        )));
    }
    let lo_cfg = configs.lower.clone().with_objective(Objective::quantile(alpha_lo)?);
    let mid_cfg = configs.mid.clone().with_objective(Objective::Mse);
    let hi_cfg = configs.upper.clone().with_objective(Objective::quantile(alpha_hi)?);

    let (lower, (mid, upper)) = rayon::join(
        || fit_gbdt(train, &lo_cfg),
        || rayon::join(|| fit_gbdt(train, &mid_cfg), || fit_gbdt(train, &hi_cfg)),
    );
    let (lower, mid, upper) = (lower?, mid?, upper?);

    let lo_pred = lower.predict(&test.features)?;
    let mid_pred = mid.predict(&test.features)?;
    let hi_pred = upper.predict(&test.features)?;
    let intervals: Vec<PredictionInterval> = mid_pred
        .iter()
        .zip(&lo_pred)
        .zip(&hi_pred)
        .map(|((&c, &lo), &hi)| PredictionInterval::from_quantiles(c, lo, hi))
        .collect();
    let crossings = lo_pred.iter().zip(&hi_pred).filter(|(lo, hi)| hi < lo).count();
    Ok(QuantileRun {
        lower,
        mid,
        upper,
        intervals,
        crossings,
    })
}

/// What the error model learns from the base model's residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorTargetKind {
    /// `|observed − predicted|`
    L1,
    /// `(observed − predicted)²`; the interval half width is the square
    /// root of the predicted value.
    L2,
}

impl ErrorTargetKind {
    pub fn target(self, observed: f64, predicted: f64) -> f64 {
        let r = observed - predicted;
        match self {
            ErrorTargetKind::L1 => r.abs(),
            ErrorTargetKind::L2 => r * r,
        }
    }

    pub fn half_width(self, predicted_error: f64) -> f64 {
        let e = predicted_error.max(0.0);
        match self {
            ErrorTargetKind::L1 => e,
            ErrorTargetKind::L2 => e.sqrt(),
        }
    }

    pub fn method(self) -> Method {
        match self {
            ErrorTargetKind::L1 => Method::ThreeSplitL1,
            ErrorTargetKind::L2 => Method::ThreeSplitL2,
        }
    }
}

pub struct ThreeSplitRun {
    pub base_model: TreeModel,
    pub error_model: TreeModel,
    /// Base predictions on the third partition, in partition order.
    pub base_predictions: Vec<f64>,
    pub intervals: Vec<PredictionInterval>,
    /// Error targets the error model was trained on.
    pub error_targets: Vec<f64>,
    /// Negative error predictions clipped to zero.
    pub clipped: usize,
}

/// Learned-error intervals on a three-way split: the base model is fit on
/// partition 1, the error model on its residuals over partition 2, and
/// intervals are produced for partition 3.
pub fn threesplit_intervals(
    data: &Dataset,
    plan: &SplitPlan,
    kind: ErrorTargetKind,
    engine: &Engine,
) -> Result<ThreeSplitRun> {
    if plan.kind != SplitKind::ThreeWay || plan.partitions.len() != 3 {
        return Err(UqError::InvalidConfig("3split needs a three-way split plan".into()));
    }
    if plan.n_samples() != data.n_samples() {
        return Err(UqError::LengthMismatch {
            expected: data.n_samples(),
            got: plan.n_samples(),
        });
    }
    let base_set = data.subset(&plan.partitions[0]);
    let error_set = data.subset(&plan.partitions[1]);
    let test_set = data.subset(&plan.partitions[2]);

    let base_model = engine.fit(&base_set)?;
    let on_error_set = base_model.predict(&error_set.features)?;
    let error_targets: Vec<f64> = error_set
        .targets
        .iter()
        .zip(&on_error_set)
        .map(|(&y, &p)| kind.target(y, p))
        .collect();
    let error_train = Dataset {
        targets: error_targets.clone(),
        ..error_set
    };
    let error_model = engine.fit(&error_train)?;

    let base_predictions = base_model.predict(&test_set.features)?;
    let predicted_errors = error_model.predict(&test_set.features)?;
    let clipped = predicted_errors.iter().filter(|&&e| e < 0.0).count();
    let intervals = base_predictions
        .iter()
        .zip(&predicted_errors)
        .map(|(&c, &e)| PredictionInterval::symmetric(c, kind.half_width(e), kind.method()))
        .collect();
    Ok(ThreeSplitRun {
        base_model,
        error_model,
        base_predictions,
        intervals,
        error_targets,
        clipped,
    })
}

/// One-sigma intervals from the GP posterior predictive.
pub fn gp_intervals(model: &GpModel, test: &Dataset) -> Result<Vec<PredictionInterval>> {
    let post = model.predictive(&test.features)?;
    Ok(post
        .means
        .iter()
        .zip(&post.stds)
        .map(|(&m, &s)| PredictionInterval::symmetric(m, s, Method::Gp))
        .collect())
}
