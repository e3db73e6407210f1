use crate::Volume;

/// Index of a layer inside the parameter slice handed to a [`crate::Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerId(pub usize);

/// Learnable weights and bias of one layer, with gradient accumulators.
///
/// Convolution weights are `[out, in, kd, kh, kw]`; dense weights are `[out, in]`.
/// The bias is `[out]` in both cases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Volume,
    pub bias: Volume,
    pub grad_weights: Volume,
    pub grad_bias: Volume,
}

impl LayerParams {
    pub fn new(weights: Volume, bias: Volume) -> Self {
        let grad_weights = Volume::zeros(weights.shape());
        let grad_bias = Volume::zeros(bias.shape());
        LayerParams {
            weights,
            bias,
            grad_weights,
            grad_bias,
        }
    }

    pub fn conv(out_channels: usize, in_channels: usize, kernel: [usize; 3]) -> Self {
        Self::new(
            Volume::zeros(&[out_channels, in_channels, kernel[0], kernel[1], kernel[2]]),
            Volume::zeros(&[out_channels]),
        )
    }

    pub fn dense(out_dim: usize, in_dim: usize) -> Self {
        Self::new(
            Volume::zeros(&[out_dim, in_dim]),
            Volume::zeros(&[out_dim]),
        )
    }

    pub fn is_conv(&self) -> bool {
        self.weights.rank() == 5
    }

    /// Number of weight entries, biases excluded.
    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn sum_squares(&self) -> f64 {
        self.weights.sum_squares() + self.bias.sum_squares()
    }
}
