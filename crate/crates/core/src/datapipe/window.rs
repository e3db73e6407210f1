use super::{Sample3D, Series4D};
use crate::{Error, Result};

/// Voxelwise means of frames `[k*s, k*s + m)` for `k = 0..=(T - m) / s`.
pub fn sliding_window_mean(series: &Series4D, m: usize, s: usize) -> Result<Vec<Sample3D>> {
    let t = series.len();
    if m == 0 || s == 0 {
        return Err(Error::Invalid(format!(
            "window size {m} and stride {s} must both be at least 1"
        )));
    }
    if m > t {
        return Err(Error::Invalid(format!(
            "{}: window size {m} exceeds series length {t}",
            series.subject_id
        )));
    }
    let count = (t - m) / s + 1;
    let scale = 1.0 / m as f64;
    let samples = (0..count)
        .map(|k| {
            let frames = &series.frames[k * s..k * s + m];
            let mut acc = frames[0].clone();
            for f in &frames[1..] {
                for (a, b) in acc.data_mut().iter_mut().zip(f.data()) {
                    *a += b;
                }
            }
            acc.data_mut().iter_mut().for_each(|v| *v *= scale);
            Sample3D {
                subject_id: series.subject_id.clone(),
                label: series.label,
                window_index: k,
                voxels: acc,
            }
        })
        .collect();
    Ok(samples)
}
