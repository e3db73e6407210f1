//! Comparison classifiers: Fisher-z connectivity features or PCA of
//! flattened volumes, each fed to L2-regularized logistic regression.

mod columns;
mod connectivity;
mod container;
mod logreg;
mod matrix;
mod pca;

use rayon::prelude::*;

pub use columns::{remove_zero_columns, ColumnMap};
pub use connectivity::{fisher_z, region_time_series, ConnectivityMatrix, Parcellation, DEFAULT_GRID, R_CLAMP};
pub use container::{BaselineKind, BaselineModel};
pub use logreg::{
    logreg_objective, logreg_predict, logreg_train, logreg_train_traced, LogRegModel, DEFAULT_L2,
    DEFAULT_MAX_ITERS, DEFAULT_TOL,
};
pub use matrix::Matrix;
pub use pca::{pca_fit, pca_fit_nonzero, PcaModel};

use crate::{Result, Sample3D, Series4D};

pub const DEFAULT_COMPONENTS: usize = 100;

/// One row per sample: the flattened voxels.
pub fn flatten_samples(samples: &[Sample3D]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.voxels.data().to_vec()).collect();
    Matrix::from_rows(&rows)
}

/// One row per subject: the upper triangle of its Fisher-z connectivity matrix.
/// The second value lists, per subject, the zero-variance regions.
pub fn connectivity_features(series: &[Series4D], parc: &Parcellation) -> Result<(Matrix, Vec<Vec<usize>>)> {
    let per: Vec<(Vec<f64>, Vec<usize>)> = series
        .par_iter()
        .map(|s| {
            let c = fisher_z(&region_time_series(s, parc)?)?;
            Ok((c.upper_triangle(), c.degenerate_rows))
        })
        .collect::<Result<_>>()?;
    let (rows, flags): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    Ok((Matrix::from_rows(&rows)?, flags))
}
