use volcore::Volume;

use super::Matrix;
use crate::{Error, Result, Series4D};

/// Correlations are clamped to `±(1 - R_CLAMP)` before `atanh`.
pub const R_CLAMP: f64 = 1e-7;

/// Region labels over a `[D, H, W]` grid; 0 is background, regions are `1..=n_regions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parcellation {
    shape: [usize; 3],
    labels: Vec<u32>,
    n_regions: usize,
}

impl Parcellation {
    pub fn new(shape: [usize; 3], labels: Vec<u32>, n_regions: usize) -> Result<Self> {
        if labels.len() != shape.iter().product::<usize>() {
            return Err(Error::Invalid(format!(
                "{} labels for a {shape:?} grid",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; n_regions + 1];
        for &l in &labels {
            let l = l as usize;
            if l > n_regions {
                return Err(Error::Invalid(format!("region id {l} exceeds {n_regions} regions")));
            }
            counts[l] += 1;
        }
        if let Some(r) = (1..=n_regions).find(|&r| counts[r] == 0) {
            return Err(Error::Invalid(format!("region {r} has no voxels")));
        }
        Ok(Parcellation {
            shape,
            labels,
            n_regions,
        })
    }

    /// Reads integer-valued region ids from a volume; `n_regions` is the largest id.
    pub fn from_volume(volume: &Volume) -> Result<Self> {
        let shape: [usize; 3] = volume
            .shape()
            .try_into()
            .map_err(|_| Error::Invalid(format!("parcellation must be [D, H, W], got {:?}", volume.shape())))?;
        let labels = volume
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::Invalid(format!("parcellation value {v} is not a region id")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let n = labels.iter().copied().max().unwrap_or(0) as usize;
        Parcellation::new(shape, labels, n)
    }

    pub fn to_volume(&self) -> Volume {
        Volume::from_vec(&self.shape, self.labels.iter().map(|&l| l as f64).collect())
            .expect("shape was validated")
    }

    /// Axis-aligned blocks: voxel `i` of an axis with length `n` split `g` ways
    /// falls in block `i * g / n`.
    pub fn grid(shape: [usize; 3], blocks: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| blocks[a] == 0 || blocks[a] > shape[a]) {
            return Err(Error::Invalid(format!("cannot split {shape:?} into {blocks:?} blocks")));
        }
        let [d, h, w] = shape;
        let mut labels = Vec::with_capacity(d * h * w);
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let bz = z * blocks[0] / d;
                    let by = y * blocks[1] / h;
                    let bx = x * blocks[2] / w;
                    labels.push(((bz * blocks[1] + by) * blocks[2] + bx + 1) as u32);
                }
            }
        }
        Parcellation::new(shape, labels, blocks.iter().product())
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
}

pub const DEFAULT_GRID: [usize; 3] = [5, 5, 4];

/// `R x T` matrix of region-mean signals.
pub fn region_time_series(series: &Series4D, parc: &Parcellation) -> Result<Matrix> {
    if series.frame_shape() != parc.shape {
        return Err(Error::Invalid(format!(
            "{}: frames {:?} vs parcellation {:?}",
            series.subject_id,
            series.frame_shape(),
            parc.shape
        )));
    }
    let r = parc.n_regions;
    let mut counts = vec![0usize; r + 1];
    for &l in &parc.labels {
        counts[l as usize] += 1;
    }
    let mut out = Matrix::zeros(r, series.len());
    let mut sums = vec![0.0; r + 1];
    for (t, frame) in series.frames.iter().enumerate() {
        sums.fill(0.0);
        for (&l, &v) in parc.labels.iter().zip(frame.data()) {
            sums[l as usize] += v;
        }
        for region in 1..=r {
            out.set(region - 1, t, sums[region] / counts[region] as f64);
        }
    }
    Ok(out)
}

/// Fisher-transformed correlation matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub z: Matrix,
    /// Rows with zero variance; their correlations are reported as 0.
    pub degenerate_rows: Vec<usize>,
}

impl ConnectivityMatrix {
    /// Strict upper triangle, row-major: `R(R-1)/2` features.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let r = self.z.rows();
        let mut v = Vec::with_capacity(r * r.saturating_sub(1) / 2);
        for i in 0..r {
            for j in i + 1..r {
                v.push(self.z.get(i, j));
            }
        }
        v
    }
}

pub fn fisher_z(series: &Matrix) -> Result<ConnectivityMatrix> {
    let (r, t) = (series.rows(), series.cols());
    if t < 3 {
        return Err(Error::Invalid(format!("correlation needs at least 3 time points, got {t}")));
    }
    let mut centered = series.clone();
    let mut norms = vec![0.0; r];
    for (i, norm) in norms.iter_mut().enumerate() {
        let row = centered.row_mut(i);
        let mean = row.iter().sum::<f64>() / t as f64;
        row.iter_mut().for_each(|v| *v -= mean);
        *norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let degenerate_rows: Vec<usize> = (0..r).filter(|&i| !(norms[i] > 0.0)).collect();
    let mut z = Matrix::zeros(r, r);
    let bound = 1.0 - R_CLAMP;
    for i in 0..r {
        for j in i + 1..r {
            if !(norms[i] > 0.0 && norms[j] > 0.0) {
                continue;
            }
            let c = super::matrix::dot(centered.row(i), centered.row(j)) / (norms[i] * norms[j]);
            let v = c.clamp(-bound, bound).atanh();
            z.set(i, j, v);
            z.set(j, i, v);
        }
    }
    if !z.is_finite() {
        return Err(Error::Numerical("non-finite correlation".into()));
    }
    Ok(ConnectivityMatrix { z, degenerate_rows })
}
