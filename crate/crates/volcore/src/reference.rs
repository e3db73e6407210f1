//! Slow, direct reference kernels used to cross-check the fast paths.
//!
//! Nothing here shares code with [`crate::ops`]: convolution is a plain
//! nested loop over every output voxel and kernel tap, pooling re-scans each
//! window, and gradients are estimated by central differences.

use crate::Volume;

/// Direct valid convolution. Panics on inconsistent shapes.
pub fn conv3d(input: &Volume, weights: &Volume, bias: &Volume, stride: usize) -> Volume {
    let (is, ws) = (input.shape(), weights.shape());
    assert_eq!(is[0], ws[1]);
    let od = (is[1] - ws[2]) / stride + 1;
    let oh = (is[2] - ws[3]) / stride + 1;
    let ow = (is[3] - ws[4]) / stride + 1;
    let mut out = Volume::zeros(&[ws[0], od, oh, ow]);
    for co in 0..ws[0] {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias.get(&[co]);
                    for ci in 0..ws[1] {
                        for a in 0..ws[2] {
                            for b in 0..ws[3] {
                                for c in 0..ws[4] {
                                    acc += weights.get(&[co, ci, a, b, c])
                                        * input.get(&[
                                            ci,
                                            z * stride + a,
                                            y * stride + b,
                                            x * stride + c,
                                        ]);
                                }
                            }
                        }
                    }
                    out.set(&[co, z, y, x], acc);
                }
            }
        }
    }
    out
}

/// Direct non-overlapping max pooling with floor semantics.
pub fn maxpool3d(input: &Volume, window: usize) -> Volume {
    let s = input.shape();
    let dims = [s[0], s[1] / window, s[2] / window, s[3] / window];
    let mut out = Volume::zeros(&dims);
    for c in 0..dims[0] {
        for z in 0..dims[1] {
            for y in 0..dims[2] {
                for x in 0..dims[3] {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..window {
                        for b in 0..window {
                            for d in 0..window {
                                m = m.max(input.get(&[
                                    c,
                                    z * window + a,
                                    y * window + b,
                                    x * window + d,
                                ]));
                            }
                        }
                    }
                    out.set(&[c, z, y, x], m);
                }
            }
        }
    }
    out
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F>(mut f: F, x: &mut [f64], i: usize, h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps exact zeros comparable.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
