//! Execution record for reverse-mode differentiation.
//!
//! Ops append nodes in execution order; [`Tape::backward`] walks them in
//! exactly the reverse order. Parameters live outside the tape: ops refer to
//! a layer by [`LayerId`] and the same parameter slice must be handed to
//! `backward`, which accumulates into its gradient buffers.

use crate::ops::{activation, conv, dense, loss, pool};
use crate::{LayerId, LayerParams, Result, VolError, Volume};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv3d {
        input: usize,
        layer: LayerId,
        stride: usize,
    },
    MaxPool3d {
        input: usize,
        argmax: Vec<usize>,
    },
    Dense {
        input: usize,
        layer: LayerId,
    },
    Relu {
        input: usize,
    },
    Sigmoid {
        input: usize,
    },
    Bce {
        input: usize,
        label: f64,
        weight: f64,
    },
}

/// Nodes are stored column-wise so backward can read values while writing gradients.
#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    values: Vec<Volume>,
    grads: Vec<Option<Volume>>,
    needs_grad: Vec<bool>,
}

fn layer<'a>(layers: &'a [LayerParams], id: LayerId) -> Result<&'a LayerParams> {
    layers
        .get(id.0)
        .ok_or_else(|| VolError::InvalidTape(format!("no layer {}", id.0)))
}

fn layer_mut<'a>(layers: &'a mut [LayerParams], id: LayerId) -> Result<&'a mut LayerParams> {
    layers
        .get_mut(id.0)
        .ok_or_else(|| VolError::InvalidTape(format!("no layer {}", id.0)))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.0 < self.ops.len() {
            Ok(v.0)
        } else {
            Err(VolError::InvalidTape(format!(
                "node {} has not been recorded ({} nodes on tape)",
                v.0,
                self.ops.len()
            )))
        }
    }

    fn push(&mut self, op: Op, value: Volume, needs_grad: bool) -> Var {
        self.ops.push(op);
        self.values.push(value);
        self.grads.push(None);
        self.needs_grad.push(needs_grad);
        Var(self.ops.len() - 1)
    }

    /// Records an input. Its gradient is only computed when `requires_grad` is set.
    pub fn leaf(&mut self, value: Volume, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    pub fn value(&self, v: Var) -> Result<&Volume> {
        Ok(&self.values[self.check(v)?])
    }

    /// Gradient of the last backward root with respect to `v`, if one was computed.
    pub fn grad(&self, v: Var) -> Option<&Volume> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn conv3d(
        &mut self,
        x: Var,
        layers: &[LayerParams],
        id: LayerId,
        stride: usize,
    ) -> Result<Var> {
        let i = self.check(x)?;
        let out = conv::conv3d_forward(&self.values[i], layer(layers, id)?, stride)?;
        Ok(self.push(
            Op::Conv3d {
                input: i,
                layer: id,
                stride,
            },
            out,
            true,
        ))
    }

    pub fn maxpool3d(&mut self, x: Var, window: usize) -> Result<Var> {
        let i = self.check(x)?;
        let (out, argmax) = pool::maxpool3d_forward(&self.values[i], window)?;
        let needs = self.needs_grad[i];
        Ok(self.push(Op::MaxPool3d { input: i, argmax }, out, needs))
    }

    pub fn dense(&mut self, x: Var, layers: &[LayerParams], id: LayerId) -> Result<Var> {
        let i = self.check(x)?;
        let out = dense::dense_forward(&self.values[i], layer(layers, id)?)?;
        Ok(self.push(Op::Dense { input: i, layer: id }, out, true))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let i = self.check(x)?;
        let out = activation::relu(&self.values[i]);
        let needs = self.needs_grad[i];
        Ok(self.push(Op::Relu { input: i }, out, needs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let i = self.check(x)?;
        let mut out = self.values[i].clone();
        out.data_mut()
            .iter_mut()
            .for_each(|z| *z = activation::sigmoid(*z));
        let needs = self.needs_grad[i];
        Ok(self.push(Op::Sigmoid { input: i }, out, needs))
    }

    /// `weight * bce(p, label)` for a scalar probability node.
    pub fn bce(&mut self, p: Var, label: f64, weight: f64) -> Result<Var> {
        let i = self.check(p)?;
        let pv = &self.values[i];
        if pv.len() != 1 {
            return Err(VolError::shape(
                "bce",
                format!("expected a scalar probability, got {:?}", pv.shape()),
            ));
        }
        let value = weight * loss::bce_term(pv.data()[0], label)?;
        let needs = self.needs_grad[i];
        Ok(self.push(
            Op::Bce {
                input: i,
                label,
                weight,
            },
            Volume::from_vec(&[1], vec![value])?,
            needs,
        ))
    }

    /// Backpropagates from a scalar root with seed 1.
    pub fn backward(&mut self, root: Var, layers: &mut [LayerParams]) -> Result<()> {
        let r = self.check(root)?;
        let shape = self.values[r].shape().to_vec();
        if self.values[r].len() != 1 {
            return Err(VolError::InvalidTape(format!(
                "backward from a non-scalar node of shape {shape:?} needs an explicit seed"
            )));
        }
        self.backward_with_seed(root, Volume::full(&shape, 1.0), layers)
    }

    /// Backpropagates `seed` (the gradient of some scalar with respect to
    /// `root`) through every node recorded up to `root`.
    ///
    /// Node gradients from a previous call are discarded; parameter gradients accumulate.
    pub fn backward_with_seed(
        &mut self,
        root: Var,
        seed: Volume,
        layers: &mut [LayerParams],
    ) -> Result<()> {
        let r = self.check(root)?;
        if seed.shape() != self.values[r].shape() {
            return Err(VolError::shape(
                "backward",
                format!("seed {:?} vs root {:?}", seed.shape(), self.values[r].shape()),
            ));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[r] = Some(seed);

        let Tape {
            ops,
            values,
            grads,
            needs_grad,
        } = self;
        for idx in (0..=r).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let (before, _) = grads.split_at_mut(idx);
            macro_rules! input_grad {
                ($i:expr) => {
                    grad_slot(&mut before[$i], &values[$i], needs_grad[$i])
                };
            }
            match &ops[idx] {
                Op::Leaf => {}
                Op::Conv3d {
                    input,
                    layer,
                    stride,
                } => {
                    let params = layer_mut(layers, *layer)?;
                    conv::conv3d_backward(&values[*input], params, *stride, &g, input_grad!(*input))?;
                }
                Op::MaxPool3d { input, argmax } => {
                    if let Some(gi) = input_grad!(*input) {
                        pool::maxpool3d_backward(&g, argmax, gi)?;
                    }
                }
                Op::Dense { input, layer } => {
                    let params = layer_mut(layers, *layer)?;
                    dense::dense_backward(&values[*input], params, &g, input_grad!(*input))?;
                }
                Op::Relu { input } => {
                    let out = &values[idx];
                    if let Some(gi) = input_grad!(*input) {
                        for ((acc, &gv), &y) in
                            gi.data_mut().iter_mut().zip(g.data()).zip(out.data())
                        {
                            if y > 0.0 {
                                *acc += gv;
                            }
                        }
                    }
                }
                Op::Sigmoid { input } => {
                    let out = &values[idx];
                    if let Some(gi) = input_grad!(*input) {
                        for ((acc, &gv), &s) in
                            gi.data_mut().iter_mut().zip(g.data()).zip(out.data())
                        {
                            *acc += gv * s * (1.0 - s);
                        }
                    }
                }
                Op::Bce {
                    input,
                    label,
                    weight,
                } => {
                    let d = weight * loss::bce_grad(values[*input].data()[0], *label);
                    if let Some(gi) = input_grad!(*input) {
                        gi.data_mut()[0] += g.data()[0] * d;
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(())
    }
}

fn grad_slot<'a>(slot: &'a mut Option<Volume>, value: &Volume, needs: bool) -> Option<&'a mut Volume> {
    if !needs {
        return None;
    }
    Some(slot.get_or_insert_with(|| Volume::zeros(value.shape())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_on_unrecorded_node_is_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = b.leaf(Volume::zeros(&[1]), true);
        let _ = b.sigmoid(x).unwrap();
        let y = b.sigmoid(x).unwrap();
        assert!(matches!(a.backward(y, &mut []), Err(VolError::InvalidTape(_))));
        assert!(matches!(a.value(y), Err(VolError::InvalidTape(_))));
    }

    #[test]
    fn relu_gradient_is_zero_at_and_below_kink() {
        let mut t = Tape::new();
        let x = t.leaf(Volume::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap(), true);
        let y = t.relu(x).unwrap();
        t.backward_with_seed(y, Volume::full(&[3], 1.0), &mut []).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn dead_relu_region() {
        let mut t = Tape::new();
        let x = t.leaf(Volume::full(&[4], -0.5), true);
        let y = t.relu(x).unwrap();
        assert!(t.value(y).unwrap().data().iter().all(|&v| v == 0.0));
        t.backward_with_seed(y, Volume::full(&[4], 1.0), &mut []).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Volume::zeros(&[1]), true);
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).unwrap().data(), &[0.5]);
        t.backward(y, &mut []).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn gradient_buffers_match_value_shapes() {
        let mut layers = vec![LayerParams::conv(2, 1, [2, 2, 2])];
        layers[0].weights.fill(0.1);
        let mut t = Tape::new();
        let x = t.leaf(Volume::full(&[1, 4, 4, 4], 1.0), true);
        let c = t.conv3d(x, &layers, LayerId(0), 1).unwrap();
        let p = t.maxpool3d(c, 3).unwrap();
        t.backward_with_seed(p, Volume::full(&[2, 1, 1, 1], 1.0), &mut layers)
            .unwrap();
        for v in [x, c, p] {
            assert_eq!(t.grad(v).unwrap().shape(), t.value(v).unwrap().shape());
        }
    }

    #[test]
    fn leaf_without_requires_grad_gets_no_gradient() {
        let mut layers = vec![LayerParams::dense(1, 2)];
        let mut t = Tape::new();
        let x = t.leaf(Volume::full(&[2], 1.0), false);
        let y = t.dense(x, &layers, LayerId(0)).unwrap();
        t.backward(y, &mut layers).unwrap();
        assert!(t.grad(x).is_none());
        assert_eq!(layers[0].grad_weights.data(), &[1.0, 1.0]);
    }
}
