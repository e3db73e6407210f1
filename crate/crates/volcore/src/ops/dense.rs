use crate::{LayerParams, Result, VolError, Volume};

fn check(input: &Volume, params: &LayerParams) -> Result<(usize, usize)> {
    let ws = params.weights.shape();
    if ws.len() != 2 {
        return Err(VolError::shape(
            "dense",
            format!("weights must be [out, in], got {ws:?}"),
        ));
    }
    if input.len() != ws[1] {
        return Err(VolError::shape(
            "dense",
            format!("input has {} values but weights expect {}", input.len(), ws[1]),
        ));
    }
    if params.bias.shape() != [ws[0]] {
        return Err(VolError::shape(
            "dense",
            format!("bias {:?} vs {} outputs", params.bias.shape(), ws[0]),
        ));
    }
    Ok((ws[0], ws[1]))
}

/// `W * flatten(input) + b`. The input may have any shape.
pub fn dense_forward(input: &Volume, params: &LayerParams) -> Result<Volume> {
    let (n_out, n_in) = check(input, params)?;
    let w = params.weights.data();
    let x = input.data();
    let out = params
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Volume::from_vec(&[n_out], out)
}

pub fn dense_backward(
    input: &Volume,
    params: &mut LayerParams,
    grad_out: &Volume,
    grad_input: Option<&mut Volume>,
) -> Result<()> {
    let (n_out, n_in) = check(input, params)?;
    if grad_out.len() != n_out {
        return Err(VolError::shape(
            "dense_backward",
            format!("upstream has {} values for {n_out} outputs", grad_out.len()),
        ));
    }
    let x = input.data();
    let go = grad_out.data();
    let LayerParams {
        weights,
        grad_weights,
        grad_bias,
        ..
    } = params;
    let gw = grad_weights.data_mut();
    for (o, &g) in go.iter().enumerate() {
        grad_bias.data_mut()[o] += g;
        for (acc, xv) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
            *acc += g * xv;
        }
    }
    if let Some(gi) = grad_input {
        if gi.len() != n_in {
            return Err(VolError::shape(
                "dense_backward",
                format!("input gradient has {} values, expected {n_in}", gi.len()),
            ));
        }
        let w = weights.data();
        let gi = gi.data_mut();
        for (o, &g) in go.iter().enumerate() {
            for (acc, wv) in gi.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *acc += g * wv;
            }
        }
    }
    Ok(())
}
