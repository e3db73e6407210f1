//! Valid (unpadded) 3D convolution over `[C, D, H, W]` volumes.
//!
//! The forward pass lowers one output depth slice at a time to a GEMM
//! (`[C_out, K] x [K, H'W']`, K = C_in * kd * kh * kw), which keeps the
//! column buffer small. The backward pass scatters each non-zero upstream
//! entry through its receptive field; behind ReLU and max pooling most of
//! the upstream gradient is exactly zero, so this is much cheaper than a
//! dense transpose-convolution.

#![allow(clippy::too_many_arguments)]

use crate::{LayerParams, Result, VolError, Volume};

/// `floor((input - kernel) / stride) + 1`, or `None` if the kernel does not fit.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || kernel > input {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    d: usize,
    h: usize,
    w: usize,
    cout: usize,
    kd: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    od: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(input: &Volume, params: &LayerParams, stride: usize) -> Result<Self> {
        let is = input.shape();
        let ws = params.weights.shape();
        if is.len() != 4 {
            return Err(VolError::shape(
                "conv3d",
                format!("input must be [C, D, H, W], got {is:?}"),
            ));
        }
        if ws.len() != 5 {
            return Err(VolError::shape(
                "conv3d",
                format!("weights must be [out, in, kd, kh, kw], got {ws:?}"),
            ));
        }
        if is[0] != ws[1] {
            return Err(VolError::shape(
                "conv3d",
                format!("input has {} channels but kernel expects {}", is[0], ws[1]),
            ));
        }
        if params.bias.shape() != [ws[0]] {
            return Err(VolError::shape(
                "conv3d",
                format!("bias {:?} does not match {} output channels", params.bias.shape(), ws[0]),
            ));
        }
        let out = |axis: usize| {
            conv_output_dim(is[axis + 1], ws[axis + 2], stride).ok_or_else(|| {
                VolError::shape(
                    "conv3d",
                    format!(
                        "kernel {:?} with stride {stride} does not fit input {is:?}",
                        &ws[2..]
                    ),
                )
            })
        };
        Ok(Geometry {
            cin: is[0],
            d: is[1],
            h: is[2],
            w: is[3],
            cout: ws[0],
            kd: ws[2],
            kh: ws[3],
            kw: ws[4],
            stride,
            od: out(0)?,
            oh: out(1)?,
            ow: out(2)?,
        })
    }

    fn out_shape(&self) -> [usize; 4] {
        [self.cout, self.od, self.oh, self.ow]
    }
}

/// Each output voxel is the bias plus the inner product of the kernel with its input window.
pub fn conv3d_forward(input: &Volume, params: &LayerParams, stride: usize) -> Result<Volume> {
    let g = Geometry::new(input, params, stride)?;
    let k = g.cin * g.kd * g.kh * g.kw;
    let plane = g.oh * g.ow;
    let chan = g.od * plane;
    let mut out = vec![0.0; g.cout * chan];
    for (co, &b) in params.bias.data().iter().enumerate() {
        out[co * chan..(co + 1) * chan].fill(b);
    }

    let x = input.data();
    let s = g.stride;
    let mut cols = vec![0.0; k * plane];
    for z in 0..g.od {
        let mut row = 0;
        for ci in 0..g.cin {
            for a in 0..g.kd {
                for b in 0..g.kh {
                    for c in 0..g.kw {
                        let dst = &mut cols[row * plane..(row + 1) * plane];
                        for y in 0..g.oh {
                            let src = ((ci * g.d + z * s + a) * g.h + y * s + b) * g.w + c;
                            let drow = &mut dst[y * g.ow..(y + 1) * g.ow];
                            if s == 1 {
                                drow.copy_from_slice(&x[src..src + g.ow]);
                            } else {
                                for (xo, v) in drow.iter_mut().enumerate() {
                                    *v = x[src + xo * s];
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        let w = params.weights.data();
        // SAFETY: `w` is cout x k row-major, `cols` is k x plane row-major, and the
        // destination rows start at co * chan + z * plane with `plane` contiguous
        // entries each, all inside `out`.
        unsafe {
            matrixmultiply::dgemm(
                g.cout,
                k,
                plane,
                1.0,
                w.as_ptr(),
                k as isize,
                1,
                cols.as_ptr(),
                plane as isize,
                1,
                1.0,
                out.as_mut_ptr().add(z * plane),
                chan as isize,
                1,
            );
        }
    }
    Volume::from_vec(&g.out_shape(), out)
}

/// Accumulates the adjoints of [`conv3d_forward`] into the layer's gradient
/// buffers and, when requested, into `grad_input`.
pub fn conv3d_backward(
    input: &Volume,
    params: &mut LayerParams,
    stride: usize,
    grad_out: &Volume,
    mut grad_input: Option<&mut Volume>,
) -> Result<()> {
    let g = Geometry::new(input, params, stride)?;
    if grad_out.shape() != g.out_shape() {
        return Err(VolError::shape(
            "conv3d_backward",
            format!(
                "upstream gradient {:?} does not match output {:?}",
                grad_out.shape(),
                g.out_shape()
            ),
        ));
    }
    if let Some(gi) = grad_input.as_deref() {
        if gi.shape() != input.shape() {
            return Err(VolError::shape(
                "conv3d_backward",
                format!("input gradient {:?} vs input {:?}", gi.shape(), input.shape()),
            ));
        }
    }

    let LayerParams {
        weights,
        grad_weights,
        grad_bias,
        ..
    } = params;
    let wt = weights.data();
    let gw = grad_weights.data_mut();
    let gb = grad_bias.data_mut();
    let x = input.data();
    let go = grad_out.data();
    let mut gi = grad_input.as_deref_mut().map(|v| v.data_mut());
    let s = g.stride;

    let mut idx = 0;
    for co in 0..g.cout {
        for z in 0..g.od {
            for y in 0..g.oh {
                for xo in 0..g.ow {
                    let gval = go[idx];
                    idx += 1;
                    if gval == 0.0 {
                        continue;
                    }
                    gb[co] += gval;
                    for ci in 0..g.cin {
                        for a in 0..g.kd {
                            for b in 0..g.kh {
                                let in_base =
                                    ((ci * g.d + z * s + a) * g.h + y * s + b) * g.w + xo * s;
                                let w_base = (((co * g.cin + ci) * g.kd + a) * g.kh + b) * g.kw;
                                let xs = &x[in_base..in_base + g.kw];
                                let gws = &mut gw[w_base..w_base + g.kw];
                                for (acc, xv) in gws.iter_mut().zip(xs) {
                                    *acc += gval * xv;
                                }
                                if let Some(gi) = gi.as_deref_mut() {
                                    let ws = &wt[w_base..w_base + g.kw];
                                    let gis = &mut gi[in_base..in_base + g.kw];
                                    for (acc, wv) in gis.iter_mut().zip(ws) {
                                        *acc += gval * wv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
