use rayon::prelude::*;
use volcore::{LayerId, LayerParams, Tape, Var, Volume};

use crate::model::ProbabilityModel;
use crate::{Error, Group, Result, Sample3D};

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    /// Squared gradient per voxel, same shape as the sample.
    pub voxels: Volume,
    pub subject_id: String,
    pub window_index: usize,
    /// True label of the sample.
    pub label: Group,
    pub target_group: Group,
}

/// `(d f_target / d x)^2` with `f_older = p` and `f_younger = 1 - p`, from one
/// forward and one backward pass.
pub fn sensitivity_map<M: ProbabilityModel + ?Sized>(
    model: &M,
    sample: &Sample3D,
    target_group: Group,
) -> Result<SensitivityMap> {
    let mut scratch: Vec<LayerParams> = model.layers().to_vec();
    let mut tape = Tape::new();
    let x = tape.leaf(model.prepare_input(&sample.voxels)?, true);
    let p = model.record(&mut tape, &scratch, x)?;
    let sign = match target_group {
        Group::Older => 1.0,
        Group::Younger => -1.0,
    };
    let seed = Volume::full(tape.value(p)?.shape(), sign);
    tape.backward_with_seed(p, seed, &mut scratch)?;
    let g = tape
        .grad(x)
        .ok_or_else(|| Error::Numerical("input gradient was not computed".into()))?;
    let squared: Vec<f64> = g.data().iter().map(|v| v * v).collect();
    Ok(SensitivityMap {
        voxels: Volume::from_vec(sample.voxels.shape(), squared)?,
        subject_id: sample.subject_id.clone(),
        window_index: sample.window_index,
        label: sample.label,
        target_group,
    })
}

/// One map per sample, computed in parallel, in input order.
pub fn sensitivity_maps<M: ProbabilityModel + Sync + ?Sized>(
    model: &M,
    samples: &[Sample3D],
    target_group: Group,
) -> Result<Vec<SensitivityMap>> {
    samples
        .par_iter()
        .map(|s| sensitivity_map(model, s, target_group))
        .collect()
}

/// `p = sigmoid(w . x + b)` over a whole volume.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSigmoidModel {
    pub shape: Vec<usize>,
    pub layer: [LayerParams; 1],
}

impl DenseSigmoidModel {
    pub fn new(weights: Volume, bias: f64) -> Result<Self> {
        let shape = weights.shape().to_vec();
        let n = weights.len();
        let w = weights.reshape(&[1, n])?;
        Ok(DenseSigmoidModel {
            shape,
            layer: [LayerParams::new(w, Volume::from_vec(&[1], vec![bias])?)],
        })
    }
}

impl ProbabilityModel for DenseSigmoidModel {
    fn layers(&self) -> &[LayerParams] {
        &self.layer
    }

    fn input_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }

    fn record(&self, tape: &mut Tape, layers: &[LayerParams], input: Var) -> Result<Var> {
        let z = tape.dense(input, layers, LayerId(0))?;
        Ok(tape.sigmoid(z)?)
    }
}
