use std::collections::BTreeMap;

use volcore::Volume;

use super::SensitivityMap;
use crate::{Error, Group, Result};

pub const DEFAULT_PERCENTILE: f64 = 95.0;

/// How maps are averaged into a group map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean over all samples of the group.
    #[default]
    Pooled,
    /// Mean per subject first, then mean over subjects.
    PerSubjectFirst,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Aggregation::Pooled),
            "per-subject" => Ok(Aggregation::PerSubjectFirst),
            _ => Err(Error::Config(format!("aggregation {s:?} (expected pooled or per-subject)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSensitivity {
    pub group: Group,
    pub mean_map: Volume,
    pub n_samples: usize,
    pub n_subjects: usize,
    pub threshold_percentile: f64,
    /// Voxel value at `threshold_percentile`.
    pub threshold_value: f64,
    pub region_mask: Volume,
}

impl GroupSensitivity {
    /// Index and value of the largest mean-map voxel (first in row-major order on ties).
    pub fn peak(&self) -> ([usize; 3], f64) {
        let data = self.mean_map.data();
        let (i, v) = data
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        let s = self.mean_map.shape();
        let (h, w) = (s[1], s[2]);
        ([i / (h * w), (i / w) % h, i % w], v)
    }

    pub fn mask_voxels(&self) -> usize {
        self.region_mask.data().iter().filter(|&&v| v > 0.0).count()
    }

    pub const CSV_HEADER: &'static str =
        "group,n_samples,n_subjects,percentile,threshold,mask_voxels,peak_d,peak_h,peak_w,peak_value";

    pub fn csv_row(&self) -> String {
        let ([d, h, w], v) = self.peak();
        format!(
            "{},{},{},{},{},{},{d},{h},{w},{v}",
            self.group.as_u8(),
            self.n_samples,
            self.n_subjects,
            self.threshold_percentile,
            self.threshold_value,
            self.mask_voxels()
        )
    }
}

/// Voxelwise sum by recursive halving, which bounds rounding drift under reordering.
fn pairwise_sum(maps: &[&Volume]) -> Volume {
    match maps {
        [only] => (*only).clone(),
        _ => {
            let (a, b) = maps.split_at(maps.len() / 2);
            let mut left = pairwise_sum(a);
            let right = pairwise_sum(b);
            for (l, r) in left.data_mut().iter_mut().zip(right.data()) {
                *l += r;
            }
            left
        }
    }
}

fn mean_of(maps: &[&Volume]) -> Volume {
    let mut sum = pairwise_sum(maps);
    let n = maps.len() as f64;
    sum.data_mut().iter_mut().for_each(|v| *v /= n);
    sum
}

pub fn aggregate_group(
    maps: &[SensitivityMap],
    group: Group,
    aggregation: Aggregation,
    percentile_level: f64,
) -> Result<GroupSensitivity> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Invalid(format!("no sensitivity maps for group {group}")))?;
    for m in maps {
        if !m.voxels.same_shape(&first.voxels) {
            return Err(Error::Invalid(format!(
                "{}: map shape {:?} differs from {:?}",
                m.subject_id,
                m.voxels.shape(),
                first.voxels.shape()
            )));
        }
        if m.label != group {
            return Err(Error::Invalid(format!(
                "{} has label {} but is aggregated into group {group}",
                m.subject_id, m.label
            )));
        }
    }
    let mut by_subject: BTreeMap<&str, Vec<&Volume>> = BTreeMap::new();
    for m in maps {
        by_subject.entry(&m.subject_id).or_default().push(&m.voxels);
    }
    let mean_map = match aggregation {
        Aggregation::Pooled => mean_of(&maps.iter().map(|m| &m.voxels).collect::<Vec<_>>()),
        Aggregation::PerSubjectFirst => {
            let per: Vec<Volume> = by_subject.values().map(|v| mean_of(v)).collect();
            mean_of(&per.iter().collect::<Vec<_>>())
        }
    };
    let (region_mask, threshold_value) = threshold_regions(&mean_map, percentile_level)?;
    Ok(GroupSensitivity {
        group,
        mean_map,
        n_samples: maps.len(),
        n_subjects: by_subject.len(),
        threshold_percentile: percentile_level,
        threshold_value,
        region_mask,
    })
}

/// Percentile of `values` by linear interpolation between sorted neighbours.
pub fn percentile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("percentile of no values".into()));
    }
    if !(0.0..=100.0).contains(&level) {
        return Err(Error::Invalid(format!("percentile {level} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = level / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = rank - lo as f64;
    if frac == 0.0 || v[lo] == v[hi] {
        return Ok(v[lo]);
    }
    Ok(v[lo] + frac * (v[hi] - v[lo]))
}

/// Binary mask of voxels at or above the given percentile, and the threshold used.
pub fn threshold_regions(map: &Volume, level: f64) -> Result<(Volume, f64)> {
    if !(level > 0.0 && level < 100.0) {
        return Err(Error::Invalid(format!("threshold percentile {level} must lie in (0, 100)")));
    }
    let p = percentile(map.data(), level)?;
    let mask = map.data().iter().map(|&v| if v >= p { 1.0 } else { 0.0 }).collect();
    Ok((Volume::from_vec(map.shape(), mask)?, p))
}

/// `2|A ∩ B| / (|A| + |B|)` for binary masks (nonzero = inside); 1 when both are empty.
pub fn dice(a: &Volume, b: &Volume) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Invalid(format!("mask shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    let (mut both, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0.0, y != 0.0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    Ok(if na + nb == 0 { 1.0 } else { 2.0 * both as f64 / (na + nb) as f64 })
}
