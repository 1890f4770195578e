//! Regression objectives: squared error, absolute error and the pinball
//! (quantile) loss, with the per-sample statistics used by tree boosting.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, UqError};
use crate::stats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Mse,
    Mae,
    Quantile { alpha: f64 },
}

impl Objective {
    pub fn quantile(alpha: f64) -> Result<Self> {
        let obj = Objective::Quantile { alpha };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::Quantile { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(
                UqError::InvalidConfig(format!("quantile alpha must lie in (0, 1), got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    /// Loss of a single prediction.
    pub fn point_loss(&self, observed: f64, predicted: f64) -> f64 {
        let r = observed - predicted;
        match *self {
            Objective::Mse => r * r,
            Objective::Mae => r.abs(),
            Objective::Quantile { alpha } => {
                if r >= 0.0 {
                    alpha * r
                } else {
                    (alpha - 1.0) * r
                }
            }
        }
    }

    /// Per-sample gradient with respect to the prediction, and a positive
    /// hessian surrogate.
    ///
    /// The squared-error gradient is that of `½·r²` (i.e. `pred − obs`), so
    /// it is half the derivative of [`Objective::point_loss`]; the factor is
    /// absorbed by the unit hessian and leaves Newton steps unchanged. At
    /// `obs == pred` the absolute and pinball gradients are 0.
    pub fn grad_hess(&self, observed: f64, predicted: f64) -> (f64, f64) {
        let diff = predicted - observed;
        let g = match *self {
            Objective::Mse => diff,
            Objective::Mae => {
                if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Objective::Quantile { alpha } => {
                if diff < 0.0 {
                    -alpha
                } else if diff > 0.0 {
                    1.0 - alpha
                } else {
                    0.0
                }
            }
        };
        (g, 1.0)
    }

    /// Constant prediction minimising the loss over `targets`.
    pub fn optimal_constant(&self, targets: &[f64]) -> f64 {
        match *self {
            Objective::Mse => stats::mean(targets),
            Objective::Mae => stats::median(targets),
            Objective::Quantile { alpha } => stats::quantile(targets, alpha),
        }
    }

    /// Whether leaves are refit to an order statistic of their residuals.
    pub(crate) fn refits_leaves(&self) -> Option<f64> {
        match *self {
            Objective::Mse => None,
            Objective::Mae => Some(0.5),
            Objective::Quantile { alpha } => Some(alpha),
        }
    }
}

/// Mean per-sample loss.
pub fn loss_value(obj: &Objective, observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_len(observed.len(), predicted.len())?;
    if observed.is_empty() {
        return Err(UqError::EmptyInput);
    }
    obj.validate()?;
    let total: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| obj.point_loss(y, p))
        .sum();
    Ok(total / observed.len() as f64)
}

/// Per-sample gradients and hessians; see [`Objective::grad_hess`].
pub fn loss_grad_hess(
    obj: &Objective,
    observed: &[f64],
    predicted: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(observed.len(), predicted.len())?;
    obj.validate()?;
    Ok(observed
        .iter()
        .zip(predicted)
        .map(|(&y, &p)| obj.grad_hess(y, p))
        .unzip())
}
