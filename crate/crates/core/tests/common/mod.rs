//! Shared helpers for the integration and acceptance targets.
#![allow(dead_code)]

use bold3d::model::{init_params, CnnConfig, CnnParams, ProbabilityModel, CONV1, CONV2, FC};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volcore::reference::relative_error;
use volcore::{bce_term, conv3d_forward, dense_forward, maxpool3d_forward, relu, sigmoid, LayerParams, Tape, Volume};

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-8;

/// Which ReLUs are active and which pool inputs win; the loss is smooth in
/// any neighbourhood where this stays fixed.
#[derive(PartialEq)]
pub struct Pattern {
    active1: Vec<bool>,
    arg1: Vec<usize>,
    active2: Vec<bool>,
    arg2: Vec<usize>,
}

/// BCE loss of the network on `x`, computed with plain forward ops (no tape).
pub fn loss_and_pattern(params: &CnnParams, x: &Volume, label: f64) -> (f64, Pattern) {
    let l = &params.layers;
    let c1 = conv3d_forward(x, &l[CONV1.0], 1).unwrap();
    let (p1, arg1) = maxpool3d_forward(&relu(&c1), params.pool).unwrap();
    let c2 = conv3d_forward(&p1, &l[CONV2.0], 1).unwrap();
    let (p2, arg2) = maxpool3d_forward(&relu(&c2), params.pool).unwrap();
    let z = dense_forward(&p2, &l[FC.0]).unwrap().data()[0];
    let pattern = Pattern {
        active1: c1.data().iter().map(|&v| v > 0.0).collect(),
        arg1,
        active2: c2.data().iter().map(|&v| v > 0.0).collect(),
        arg2,
    };
    (bce_term(sigmoid(z), label).unwrap(), pattern)
}

/// Tape gradients of the BCE loss: per-layer parameter gradients and the input gradient.
pub fn analytic_gradients(params: &CnnParams, x: &Volume, label: f64) -> (Vec<LayerParams>, Volume) {
    let mut layers = params.layers.clone();
    layers.iter_mut().for_each(LayerParams::zero_grad);
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let p = params.record(&mut tape, &layers, xv).unwrap();
    let loss = tape.bce(p, label, 1.0).unwrap();
    tape.backward(loss, &mut layers).unwrap();
    (layers, tape.grad(xv).unwrap().clone())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU kink or changed a pool winner.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Coordinates at or above the 1e-5 relative tolerance.
    pub over_tol: usize,
    /// Largest |analytic - numeric| among those, in units of ulp(loss) / step.
    pub max_over_ulps: f64,
}

impl GradCheck {
    pub fn merge(&mut self, o: GradCheck) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
        self.over_tol += o.over_tol;
        self.max_over_ulps = self.max_over_ulps.max(o.max_over_ulps);
    }
}

/// Parameters from the usual initializer with every weight and bias multiplied by `scale`.
pub fn scaled_params(config: &CnnConfig, seed: u64, scale: f64) -> CnnParams {
    let mut p = init_params(config, seed).unwrap();
    for l in &mut p.layers {
        l.weights.data_mut().iter_mut().for_each(|v| *v *= scale);
        l.bias.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    p
}

pub fn random_input(config: &CnnConfig, rng: &mut ChaCha8Rng) -> Volume {
    let [d, h, w] = config.input_shape;
    Volume::from_vec(&[1, d, h, w], (0..d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Compares analytic and central-difference gradients of the loss at
/// `per_tensor` random coordinates of every weight, bias and input tensor
/// (all coordinates when a tensor is smaller).
pub fn check_network(params: &CnnParams, x: &Volume, label: f64, per_tensor: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (loss, base) = loss_and_pattern(params, x, label);
    let resolution = (loss.abs() * f64::EPSILON) / FD_STEP;
    let (grads, gx) = analytic_gradients(params, x, label);
    let mut stats = GradCheck::default();
    let mut visit = |analytic: f64, f: &mut dyn FnMut(f64) -> (f64, Pattern)| {
        let (plus, pp) = f(FD_STEP);
        let (minus, pm) = f(-FD_STEP);
        if pp != base || pm != base {
            stats.skipped += 1;
            return;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        stats.checked += 1;
        let rel = relative_error(analytic, numeric, REL_FLOOR);
        stats.max_rel_err = stats.max_rel_err.max(rel);
        if rel >= 1e-5 {
            stats.over_tol += 1;
            stats.max_over_ulps = stats.max_over_ulps.max((analytic - numeric).abs() / resolution);
        }
    };
    let mut pick = |n: usize| -> Vec<usize> {
        if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        }
    };
    for (li, g) in grads.iter().enumerate() {
        for bias in [false, true] {
            let n = if bias { g.bias.len() } else { g.weights.len() };
            for i in pick(n) {
                let analytic = if bias { g.grad_bias.data()[i] } else { g.grad_weights.data()[i] };
                let mut p = params.clone();
                let orig = if bias { p.layers[li].bias.data()[i] } else { p.layers[li].weights.data()[i] };
                visit(analytic, &mut |h| {
                    let t = if bias { &mut p.layers[li].bias } else { &mut p.layers[li].weights };
                    t.data_mut()[i] = orig + h;
                    loss_and_pattern(&p, x, label)
                });
            }
        }
    }
    for i in pick(x.len()) {
        let mut xp = x.clone();
        let orig = x.data()[i];
        visit(gx.data()[i], &mut |h| {
            xp.data_mut()[i] = orig + h;
            loss_and_pattern(params, &xp, label)
        });
    }
    stats
}
