//! Clamped binary cross-entropy with an L2 penalty on every weight and bias.
//!
//! The data term is the mean over the mini-batch; the penalty is added once.

use crate::{LayerParams, Result, VolError};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(VolError::Label(y))
    }
}

/// `-(y ln p + (1 - y) ln(1 - p))` on the clamped probability.
pub fn bce_term(p: f64, y: f64) -> Result<f64> {
    check_label(y)?;
    let pc = clamp_prob(p);
    Ok(-(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()))
}

/// Derivative of [`bce_term`] with respect to the unclamped `p`; zero where the clamp is active.
pub(crate) fn bce_grad(p: f64, y: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// `lambda * sum(theta^2)` over all weights and biases.
pub fn l2_penalty(layers: &[LayerParams], lambda: f64) -> f64 {
    lambda * layers.iter().map(LayerParams::sum_squares).sum::<f64>()
}

/// Adds `2 * lambda * theta` to every gradient buffer.
pub fn add_l2_grad(layers: &mut [LayerParams], lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for l in layers {
        for (g, w) in l.grad_weights.data_mut().iter_mut().zip(l.weights.data()) {
            *g += 2.0 * lambda * w;
        }
        for (g, b) in l.grad_bias.data_mut().iter_mut().zip(l.bias.data()) {
            *g += 2.0 * lambda * b;
        }
    }
}

/// Mean BCE over the batch plus `lambda * ||theta||^2`.
pub fn bce_l2_loss(
    probs: &[f64],
    labels: &[f64],
    layers: &[LayerParams],
    lambda: f64,
) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(VolError::Invalid(
            "bce_l2_loss",
            format!("{} probabilities for {} labels", probs.len(), labels.len()),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(VolError::Invalid("bce_l2_loss", format!("lambda {lambda} < 0")));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += bce_term(p, y)?;
    }
    Ok(total / probs.len() as f64 + l2_penalty(layers, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Volume;

    #[test]
    fn half_probability_costs_ln2() {
        let l = bce_l2_loss(&[0.5], &[1.0], &[], 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let l = bce_l2_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], &[], 0.0).unwrap();
        assert!(l >= 0.0 && l <= -(1.0 - PROB_EPS).ln() + 1e-18, "{l}");
    }

    #[test]
    fn single_weight_penalty() {
        let layer = LayerParams::new(
            Volume::from_vec(&[1, 1], vec![2.0]).unwrap(),
            Volume::zeros(&[1]),
        );
        let l = bce_l2_loss(&[0.5], &[1.0], &[layer], 0.001).unwrap();
        assert!((l - (std::f64::consts::LN_2 + 0.004)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_labels() {
        assert_eq!(bce_l2_loss(&[0.5], &[0.5], &[], 0.0), Err(VolError::Label(0.5)));
        assert!(bce_l2_loss(&[0.5], &[2.0], &[], 0.0).is_err());
        assert!(bce_l2_loss(&[], &[], &[], 0.0).is_err());
    }

    #[test]
    fn saturated_probabilities_stay_finite() {
        let l = bce_l2_loss(&[0.0, 1.0], &[1.0, 0.0], &[], 0.0).unwrap();
        assert!(l.is_finite());
        // 1 - (1 - eps) is not exactly eps in f64.
        assert!((l + PROB_EPS.ln()).abs() < 1e-3, "{l}");
    }
}
