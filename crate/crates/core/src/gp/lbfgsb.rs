//! Bound-constrained limited-memory BFGS.
//!
//! Each iteration fixes the variables sitting on a bound whose gradient
//! pushes outward, builds the two-loop L-BFGS direction on the remaining
//! free subspace, and runs a backtracking Armijo search along the projected
//! path `P(x + t·d)`. Curvature pairs with `sᵀy ≤ 0` are discarded, so the
//! inverse-Hessian approximation stays positive definite.

use std::collections::VecDeque;

use crate::error::{Result, UqError};

#[derive(Debug, Clone)]
pub struct LbfgsbOptions {
    pub max_iter: usize,
    /// Stop once the infinity norm of the projected gradient falls below.
    pub pg_tol: f64,
    /// Stop when the relative decrease of the objective is below this.
    pub f_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        LbfgsbOptions {
            max_iter: 200,
            pg_tol: 1e-5,
            f_tol: 1e-15,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&xi, &gi), &(lo, hi))| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `objective` over the box `bounds` starting from `x0`.
///
/// The objective returns `(value, gradient)`; an `Err` or a non-finite
/// value is treated as an infeasible trial point and the line search backs
/// off. Only a failure at the starting point is reported as
/// [`UqError::NonFiniteObjective`].
pub fn lbfgsb_minimize<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    options: &LbfgsbOptions,
) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    assert_eq!(x0.len(), bounds.len(), "one bound per coordinate");
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut f, mut g) = match objective(&x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        _ => return Err(UqError::NonFiniteObjective),
    };

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut iterations = 0;
    let mut pg = projected_grad_norm(&x, &g, bounds);

    while iterations < options.max_iter && pg >= options.pg_tol {
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let (lo, hi) = bounds[i];
                !((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
            })
            .collect();
        let masked = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&free).map(|(&a, &f)| if f { a } else { 0.0 }).collect()
        };

        let mut d = two_loop(&masked(&g), &history, &masked);
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            d = masked(&g).iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        if slope >= 0.0 {
            break;
        }

        // Scale the very first steepest-descent step to unit length.
        let mut t = if history.is_empty() {
            (1.0 / d.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if let Ok((ft, gt)) = objective(&trial) {
                if ft.is_finite()
                    && gt.iter().all(|v| v.is_finite())
                    && ft <= f + 1e-4 * decrease
                {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let rel_change = (f - f_new).abs() / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        pg = projected_grad_norm(&x, &g, bounds);
        if rel_change < options.f_tol {
            break;
        }
    }

    Ok(OptimResult {
        x,
        value: f,
        iterations,
        converged: pg < options.pg_tol,
        projected_grad_norm: pg,
    })
}

fn two_loop(
    grad: &[f64],
    history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    mask: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    let masked: Vec<(Vec<f64>, Vec<f64>, f64)> = history
        .iter()
        .map(|(s, y, _)| {
            let (s, y) = (mask(s), mask(y));
            let sy = dot(&s, &y);
            (s, y, sy)
        })
        .collect();
    for (s, y, sy) in masked.iter().rev() {
        if *sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = dot(s, &q) / sy;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = masked
        .iter()
        .rev()
        .find(|(_, _, sy)| *sy > 0.0)
        .map(|(_, y, sy)| sy / dot(y, y))
        .unwrap_or(1.0);
    for qi in &mut q {
        *qi *= gamma;
    }
    for ((s, y, sy), a) in masked.iter().zip(alphas.iter().rev()) {
        if *sy <= 0.0 {
            continue;
        }
        let b = dot(y, &q) / sy;
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}
