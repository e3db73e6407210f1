use super::matrix::dot;
use super::Matrix;
use crate::{Error, Result};

pub const DEFAULT_L2: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Armijo sufficient-decrease constant.
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    /// False when `max_iters` ran out before the gradient norm fell below `tol`.
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    volcore::sigmoid(z)
}

/// Mean BCE from logits plus `l2 * ||w||^2`, with the gradient (weights, then bias).
pub fn logreg_objective(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>) {
    let n = x.rows() as f64;
    let mut grad = vec![0.0; w.len() + 1];
    let mut loss = 0.0;
    for r in 0..x.rows() {
        let row = x.row(r);
        let z = dot(row, w) + b;
        loss += softplus(z) - y[r] * z;
        let e = sigmoid(z) - y[r];
        for (g, v) in grad.iter_mut().zip(row) {
            *g += e * v;
        }
        grad[w.len()] += e;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    for (g, wi) in grad.iter_mut().zip(w) {
        *g += 2.0 * l2 * wi;
    }
    (loss / n + l2 * dot(w, w), grad)
}

fn check_inputs(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 || x.rows() != y.len() {
        return Err(Error::Invalid(format!("{} rows for {} labels", x.rows(), y.len())));
    }
    if !x.is_finite() {
        return Err(Error::Invalid("features contain non-finite values".into()));
    }
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid(format!("label {v} is not 0 or 1")));
    }
    Ok(())
}

fn logits(x: &Matrix, t: &[f64]) -> Vec<f64> {
    let d = x.cols();
    (0..x.rows()).map(|r| dot(x.row(r), &t[..d]) + t[d]).collect()
}

/// `softplus(z + delta) - softplus(z)` without cancellation.
fn softplus_change(z: f64, delta: f64) -> f64 {
    if z > 0.0 {
        delta + (sigmoid(-z) * (-delta).exp_m1()).ln_1p()
    } else {
        (sigmoid(z) * delta.exp_m1()).ln_1p()
    }
}

/// Objective change from `t` to `t + dt`, computed from the per-row logit
/// changes so that it stays accurate when far smaller than the objective.
fn objective_change(x: &Matrix, y: &[f64], z: &[f64], t: &[f64], dt: &[f64], l2: f64) -> f64 {
    let d = x.cols();
    let data: f64 = (0..x.rows())
        .map(|r| {
            let delta = dot(x.row(r), &dt[..d]) + dt[d];
            softplus_change(z[r], delta) - y[r] * delta
        })
        .sum();
    let penalty: f64 = t[..d].iter().zip(&dt[..d]).map(|(w, dw)| dw * (2.0 * w + dw)).sum();
    data / x.rows() as f64 + l2 * penalty
}

/// Gradient descent with a Barzilai-Borwein trial step and Armijo
/// backtracking, stopping when the gradient norm drops below `tol`.
///
/// The sufficient-decrease test uses the accurately computed change in the
/// objective, and `on_step` sees the objective tracked as the running sum of
/// those changes, so the trace is strictly decreasing.
pub fn logreg_train_traced(
    x: &Matrix,
    y: &[f64],
    l2: f64,
    max_iters: usize,
    tol: f64,
    mut on_step: impl FnMut(f64),
) -> Result<LogRegModel> {
    check_inputs(x, y)?;
    if !(l2 >= 0.0) || !l2.is_finite() {
        return Err(Error::Invalid(format!("l2 must be non-negative, got {l2}")));
    }
    let d = x.cols();
    let mut theta = vec![0.0; d + 1];
    let eval = |t: &[f64]| logreg_objective(x, y, &t[..d], t[d], l2);
    let (mut f, mut g) = eval(&theta);
    let mut z = logits(x, &theta);
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut gnorm = dot(&g, &g).sqrt();
    while gnorm >= tol && iterations < max_iters {
        if let Some((pt, pg)) = &prev {
            let s: Vec<f64> = theta.iter().zip(pt).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 0.0 {
                step = dot(&s, &s) / sy;
            }
        }
        let accepted = loop {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            let dt: Vec<f64> = cand.iter().zip(&theta).map(|(c, t)| c - t).collect();
            let df = objective_change(x, y, &z, &theta, &dt, l2);
            if df < 0.0 && df <= ARMIJO_C * dot(&g, &dt) {
                break Some((cand, df));
            }
            step *= 0.5;
            if step < 1e-30 || dt.iter().all(|&v| v == 0.0) {
                break None;
            }
        };
        iterations += 1;
        let Some((cand, df)) = accepted else {
            // No representable decrease remains along the gradient.
            break;
        };
        let (_, gc) = eval(&cand);
        z = logits(x, &cand);
        prev = Some((std::mem::replace(&mut theta, cand), std::mem::replace(&mut g, gc)));
        f += df;
        gnorm = dot(&g, &g).sqrt();
        on_step(f);
    }
    if !f.is_finite() {
        return Err(Error::Numerical(format!("logistic regression objective became {f}")));
    }
    let bias = theta.pop().unwrap_or(0.0);
    Ok(LogRegModel {
        weights: theta,
        bias,
        l2,
        converged: gnorm < tol,
        iterations,
        grad_norm: gnorm,
    })
}

pub fn logreg_train(x: &Matrix, y: &[f64], l2: f64, max_iters: usize, tol: f64) -> Result<LogRegModel> {
    logreg_train_traced(x, y, l2, max_iters, tol, |_| {})
}

impl LogRegModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::Invalid(format!(
                "{} features, model expects {}",
                x.cols(),
                self.weights.len()
            )));
        }
        Ok((0..x.rows())
            .map(|r| sigmoid(dot(x.row(r), &self.weights) + self.bias))
            .collect())
    }

    /// Training objective at the stored parameters.
    pub fn objective(&self, x: &Matrix, y: &[f64]) -> f64 {
        logreg_objective(x, y, &self.weights, self.bias, self.l2).0
    }
}

pub fn logreg_predict(model: &LogRegModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}
