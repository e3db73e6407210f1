//! Non-overlapping 3D max pooling (window = stride, trailing partial windows dropped).

use crate::{Result, VolError, Volume};

pub fn pool_output_dim(input: usize, window: usize) -> Option<usize> {
    if window == 0 || window > input {
        None
    } else {
        Some(input / window)
    }
}

/// Returns the pooled volume and, per output voxel, the flat input offset of
/// its maximum. Ties go to the first voxel in row-major scan order.
pub fn maxpool3d_forward(input: &Volume, window: usize) -> Result<(Volume, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(VolError::shape(
            "maxpool3d",
            format!("input must be [C, D, H, W], got {s:?}"),
        ));
    }
    let dims: Vec<usize> = s[1..]
        .iter()
        .map(|&d| pool_output_dim(d, window))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            VolError::shape(
                "maxpool3d",
                format!("window {window} does not fit input {s:?}"),
            )
        })?;
    let (c, d, h, w) = (s[0], s[1], s[2], s[3]);
    let (od, oh, ow) = (dims[0], dims[1], dims[2]);
    let x = input.data();
    let mut out = Vec::with_capacity(c * od * oh * ow);
    let mut argmax = Vec::with_capacity(c * od * oh * ow);
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = usize::MAX;
                    for a in 0..window {
                        for b in 0..window {
                            let row = ((ch * d + z * window + a) * h + y * window + b) * w
                                + xo * window;
                            for (cc, &v) in x[row..row + window].iter().enumerate() {
                                if best_at == usize::MAX || v > best {
                                    best = v;
                                    best_at = row + cc;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_at);
                }
            }
        }
    }
    Ok((Volume::from_vec(&[c, od, oh, ow], out)?, argmax))
}

/// Routes each upstream entry to its window's argmax voxel.
pub fn maxpool3d_backward(
    grad_out: &Volume,
    argmax: &[usize],
    grad_input: &mut Volume,
) -> Result<()> {
    if grad_out.len() != argmax.len() {
        return Err(VolError::shape(
            "maxpool3d_backward",
            format!("{} upstream values for {} windows", grad_out.len(), argmax.len()),
        ));
    }
    let gi = grad_input.data_mut();
    for (&g, &at) in grad_out.data().iter().zip(argmax) {
        let slot = gi.get_mut(at).ok_or_else(|| {
            VolError::shape("maxpool3d_backward", format!("argmax {at} out of range"))
        })?;
        *slot += g;
    }
    Ok(())
}
