//! Volumetric CNN classification of residual BOLD time series.
//!
//! The pipeline: sliding-window means turn each subject's 4D run into 3D
//! samples ([`datapipe`]); a two-convolution network is trained on them with
//! SGD + momentum ([`model`]); predictions are soft-voted per subject and
//! scored with F1 and ROC AUC ([`metrics`]); squared input gradients locate
//! the voxels that drive the prediction ([`interpret`]); PCA and Fisher-z
//! connectivity features feed a logistic-regression baseline
//! ([`baselines`]). [`pipeline`] wires these into the command-line workflow.

pub mod baselines;
mod binio;
pub mod datapipe;
mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod pipeline;

pub use datapipe::{Group, Sample3D, Series4D};
pub use error::{Error, FormatError, Result};
