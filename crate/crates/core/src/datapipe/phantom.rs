//! Synthetic cohorts with known discriminative regions.
//!
//! Every frame is white Gaussian noise plus, for each signal region, a
//! uniform ball whose amplitude depends on the subject's group and is
//! modulated over time by `1 + depth * sin(2 pi t / period + phase)`, with a
//! per-subject random phase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use volcore::Volume;

use super::{Group, Series4D};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRegion {
    /// Voxel index `[d, h, w]` of the ball centre.
    pub center: [usize; 3],
    pub radius: f64,
    /// Amplitude for `[younger, older]`.
    pub amplitude: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub n_young: usize,
    pub n_old: usize,
    pub frames: usize,
    pub shape: [usize; 3],
    pub regions: Vec<SignalRegion>,
    pub noise_sigma: f64,
    pub envelope_period: f64,
    pub envelope_depth: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            n_young: 30,
            n_old: 45,
            frames: 30,
            shape: [43, 51, 40],
            regions: vec![SignalRegion {
                center: [21, 25, 20],
                radius: 6.0,
                amplitude: [0.0, 1.0],
            }],
            noise_sigma: 1.0,
            envelope_period: 20.0,
            envelope_depth: 0.5,
            seed: 0,
        }
    }
}

pub struct PhantomCohort {
    pub series: Vec<Series4D>,
    /// One binary ground-truth mask per signal region.
    pub masks: Vec<Volume>,
}

impl PhantomSpec {
    pub fn n_subjects(&self) -> usize {
        self.n_young + self.n_old
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects() == 0 {
            return Err(Error::Invalid("phantom cohort has no subjects".into()));
        }
        if self.frames == 0 || self.shape.contains(&0) {
            return Err(Error::Invalid(format!(
                "phantom needs at least one frame and positive dimensions, got {} frames of {:?}",
                self.frames, self.shape
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Invalid(format!("noise_sigma {} < 0", self.noise_sigma)));
        }
        if !(self.envelope_period > 0.0) || !(0.0..1.0).contains(&self.envelope_depth) {
            return Err(Error::Invalid(format!(
                "envelope period {} must be > 0 and depth {} in [0, 1)",
                self.envelope_period, self.envelope_depth
            )));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.radius >= 0.0) || r.amplitude.iter().any(|a| !a.is_finite()) {
                return Err(Error::Invalid(format!("region {i}: bad radius or amplitude")));
            }
            for axis in 0..3 {
                let c = r.center[axis] as f64;
                if c - r.radius < 0.0 || c + r.radius > (self.shape[axis] - 1) as f64 {
                    return Err(Error::Invalid(format!(
                        "region {i}: ball at {:?} with radius {} leaves the {:?} volume",
                        r.center, r.radius, self.shape
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether any region has different amplitudes for the two groups.
    pub fn has_planted_signal(&self) -> bool {
        self.regions.iter().any(|r| r.amplitude[0] != r.amplitude[1])
    }

    pub fn subject_id(&self, index: usize) -> String {
        format!("sub-{index:03}")
    }

    pub fn group_of(&self, index: usize) -> Group {
        if index < self.n_young {
            Group::Younger
        } else {
            Group::Older
        }
    }

    pub fn region_mask(&self, region: &SignalRegion) -> Volume {
        let [d, h, w] = self.shape;
        let mut mask = Volume::zeros(&self.shape);
        let r2 = region.radius * region.radius;
        let c = region.center.map(|v| v as f64);
        let data = mask.data_mut();
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let dist2 = (z as f64 - c[0]).powi(2)
                        + (y as f64 - c[1]).powi(2)
                        + (x as f64 - c[2]).powi(2);
                    if dist2 <= r2 {
                        data[(z * h + y) * w + x] = 1.0;
                    }
                }
            }
        }
        mask
    }
}

fn build_subject(spec: &PhantomSpec, masks: &[Volume], index: usize) -> Result<Series4D> {
    let group = spec.group_of(index);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(e.to_string()))?;

    let frames = (0..spec.frames)
        .map(|t| {
            let envelope = 1.0
                + spec.envelope_depth
                    * (std::f64::consts::TAU * t as f64 / spec.envelope_period + phase).sin();
            let mut frame = Volume::zeros(&spec.shape);
            if spec.noise_sigma > 0.0 {
                frame
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = noise.sample(&mut rng));
            }
            for (region, mask) in spec.regions.iter().zip(masks) {
                let amp = region.amplitude[group.index()] * envelope;
                if amp == 0.0 {
                    continue;
                }
                for (v, &m) in frame.data_mut().iter_mut().zip(mask.data()) {
                    if m > 0.0 {
                        *v += amp;
                    }
                }
            }
            // Stored as f32 on disk; keep memory and disk identical.
            frame
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = *v as f32 as f64);
            frame
        })
        .collect();
    Series4D::new(spec.subject_id(index), group, frames)
}

/// Generates subject `index` (younger subjects first) without building the whole cohort.
pub fn generate_subject(spec: &PhantomSpec, index: usize) -> Result<Series4D> {
    spec.validate()?;
    if index >= spec.n_subjects() {
        return Err(Error::Invalid(format!(
            "subject index {index} out of range for {} subjects",
            spec.n_subjects()
        )));
    }
    let masks: Vec<Volume> = spec.regions.iter().map(|r| spec.region_mask(r)).collect();
    build_subject(spec, &masks, index)
}

pub fn generate_phantom_cohort(spec: &PhantomSpec) -> Result<PhantomCohort> {
    spec.validate()?;
    let masks: Vec<Volume> = spec.regions.iter().map(|r| spec.region_mask(r)).collect();
    let series = (0..spec.n_subjects())
        .into_par_iter()
        .map(|i| build_subject(spec, &masks, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhantomCohort { series, masks })
}
