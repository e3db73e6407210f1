use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use volcore::{LayerId, LayerParams, Tape, Var, Volume};

use super::CnnConfig;
use crate::{Error, Result, Sample3D};

pub const CONV1: LayerId = LayerId(0);
pub const CONV2: LayerId = LayerId(1);
pub const FC: LayerId = LayerId(2);

/// A differentiable map from one input volume to a probability.
pub trait ProbabilityModel {
    fn layers(&self) -> &[LayerParams];

    /// Shape the input leaf must have.
    fn input_shape(&self) -> Vec<usize>;

    /// Records the forward pass on `tape`, reading parameters from `layers`,
    /// and returns the scalar probability node.
    fn record(&self, tape: &mut Tape, layers: &[LayerParams], input: Var) -> Result<Var>;

    /// Reshapes `voxels` to [`Self::input_shape`], checking the element count.
    fn prepare_input(&self, voxels: &Volume) -> Result<Volume> {
        let shape = self.input_shape();
        let spatial = &shape[shape.len().saturating_sub(voxels.rank())..];
        if voxels.shape() != shape.as_slice() && voxels.shape() != spatial {
            return Err(Error::Invalid(format!(
                "input shape {:?} does not match model input {shape:?}",
                voxels.shape()
            )));
        }
        Ok(voxels.clone().reshape(&shape)?)
    }

    fn probability(&self, voxels: &Volume) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(self.prepare_input(voxels)?, false);
        let p = self.record(&mut tape, self.layers(), x)?;
        Ok(tape.value(p)?.data()[0])
    }
}

/// Weights of conv1, conv2 and fc plus their momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub input_shape: [usize; 3],
    pub pool: usize,
    /// Indexed by [`CONV1`], [`CONV2`], [`FC`].
    pub layers: Vec<LayerParams>,
    /// `(weights, bias)` velocity per layer.
    pub velocity: Vec<(Volume, Volume)>,
}

impl CnnParams {
    /// All-zero parameters and velocities for `config`'s architecture.
    pub fn zeros(config: &CnnConfig) -> Result<Self> {
        let shapes = config.layer_shapes()?;
        let k1 = config.conv1.kernel;
        let k2 = config.conv2.kernel;
        let layers = vec![
            LayerParams::conv(config.conv1.out_channels, 1, [k1; 3]),
            LayerParams::conv(config.conv2.out_channels, config.conv1.out_channels, [k2; 3]),
            LayerParams::dense(1, shapes.fc_in),
        ];
        Ok(Self::from_layers(config.input_shape, config.pool, layers))
    }

    pub fn from_layers(input_shape: [usize; 3], pool: usize, layers: Vec<LayerParams>) -> Self {
        let velocity = layers
            .iter()
            .map(|l| (Volume::zeros(l.weights.shape()), Volume::zeros(l.bias.shape())))
            .collect();
        CnnParams {
            input_shape,
            pool,
            layers,
            velocity,
        }
    }

    /// Checks that the parameters have the shapes `config` implies.
    pub fn check_matches(&self, config: &CnnConfig) -> Result<()> {
        let expected = CnnParams::zeros(config)?;
        let same = self.input_shape == expected.input_shape
            && self.pool == expected.pool
            && self.layers.len() == expected.layers.len()
            && self.layers.iter().zip(&expected.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape() && a.bias.shape() == b.bias.shape()
            })
            && self.velocity.len() == self.layers.len()
            && self
                .velocity
                .iter()
                .zip(&self.layers)
                .all(|((vw, vb), l)| vw.same_shape(&l.weights) && vb.same_shape(&l.bias));
        if same {
            Ok(())
        } else {
            Err(Error::Config("parameters do not match the configured architecture".into()))
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(LayerParams::zero_grad);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }
}

impl ProbabilityModel for CnnParams {
    fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    fn input_shape(&self) -> Vec<usize> {
        let [d, h, w] = self.input_shape;
        vec![1, d, h, w]
    }

    fn record(&self, tape: &mut Tape, layers: &[LayerParams], input: Var) -> Result<Var> {
        let x = tape.conv3d(input, layers, CONV1, 1)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool3d(x, self.pool)?;
        let x = tape.conv3d(x, layers, CONV2, 1)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool3d(x, self.pool)?;
        let z = tape.dense(x, layers, FC)?;
        Ok(tape.sigmoid(z)?)
    }
}

/// Each layer's weights and biases drawn i.i.d. from `U(-sqrt(u), sqrt(u))`
/// with `u = 1 / (number of weights in the layer)`.
pub fn init_params(config: &CnnConfig, seed: u64) -> Result<CnnParams> {
    config.validate()?;
    let mut params = CnnParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        let bound = (1.0 / layer.num_weights() as f64).sqrt();
        let mut draw = |v: &mut Volume| {
            v.data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound))
        };
        draw(&mut layer.weights);
        draw(&mut layer.bias);
    }
    Ok(params)
}

/// `p(older | sample)` for one normalized sample.
pub fn forward(params: &CnnParams, sample: &Volume) -> Result<f64> {
    params.probability(sample)
}

/// Probabilities for many samples, computed in parallel, in input order.
pub fn predict(params: &CnnParams, samples: &[Sample3D]) -> Result<Vec<f64>> {
    samples
        .par_iter()
        .map(|s| forward(params, &s.voxels))
        .collect()
}
