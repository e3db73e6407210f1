use volcore::Volume;

use super::Sample3D;
use crate::{Error, Result};

/// Training-set centering and scaling: `(x - mean_image) / max_abs`, where
/// `max_abs` is the largest `|x - mean_image|` seen in training.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean_image: Volume,
    pub max_abs: f64,
}

pub fn fit_normalizer(train: &[Sample3D]) -> Result<Normalizer> {
    let first = train
        .first()
        .ok_or_else(|| Error::Invalid("cannot fit a normalizer on an empty training set".into()))?;
    let shape = first.voxels.shape();
    let mut mean = Volume::zeros(shape);
    // Summing in (subject, window) order makes the statistics independent of input order.
    let mut order: Vec<&Sample3D> = train.iter().collect();
    order.sort_by(|a, b| (&a.subject_id, a.window_index).cmp(&(&b.subject_id, b.window_index)));
    for s in order {
        if s.voxels.shape() != shape {
            return Err(Error::Invalid(format!(
                "{}: sample shape {:?} differs from {:?}",
                s.subject_id,
                s.voxels.shape(),
                shape
            )));
        }
        for (m, v) in mean.data_mut().iter_mut().zip(s.voxels.data()) {
            *m += v;
        }
    }
    let n = train.len() as f64;
    mean.data_mut().iter_mut().for_each(|m| *m /= n);

    let max_abs = train.iter().fold(0.0f64, |acc, s| {
        s.voxels
            .data()
            .iter()
            .zip(mean.data())
            .fold(acc, |a, (v, m)| a.max((v - m).abs()))
    });
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return Err(Error::Degenerate(format!(
            "training samples are constant across {} samples (max |x - mean| = {max_abs})",
            train.len()
        )));
    }
    Ok(Normalizer {
        mean_image: mean,
        max_abs,
    })
}

impl Normalizer {
    pub fn new(mean_image: Volume, max_abs: f64) -> Result<Self> {
        if !(max_abs > 0.0) || !max_abs.is_finite() {
            return Err(Error::Degenerate(format!("max_abs must be positive, got {max_abs}")));
        }
        Ok(Normalizer { mean_image, max_abs })
    }

    fn check(&self, v: &Volume) -> Result<()> {
        if v.shape() != self.mean_image.shape() {
            return Err(Error::Invalid(format!(
                "sample shape {:?} does not match normalizer {:?}",
                v.shape(),
                self.mean_image.shape()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, sample: &Sample3D) -> Result<Sample3D> {
        let mut out = sample.clone();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    /// No clipping: held-out samples may land outside `[-1, 1]`.
    pub fn apply_in_place(&self, sample: &mut Sample3D) -> Result<()> {
        self.check(&sample.voxels)?;
        for (v, m) in sample.voxels.data_mut().iter_mut().zip(self.mean_image.data()) {
            *v = (*v - m) / self.max_abs;
        }
        Ok(())
    }

    pub fn denormalize(&self, v: &Volume) -> Result<Volume> {
        self.check(v)?;
        let mut out = v.clone();
        for (x, m) in out.data_mut().iter_mut().zip(self.mean_image.data()) {
            *x = *x * self.max_abs + m;
        }
        Ok(out)
    }
}
