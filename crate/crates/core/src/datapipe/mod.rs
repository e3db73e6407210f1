//! Everything between files on disk and normalized training samples.

mod normalize;
mod phantom;
mod split;
mod types;
pub mod vol4;
mod window;

pub use normalize::{fit_normalizer, Normalizer};
pub use phantom::{generate_phantom_cohort, generate_subject, PhantomCohort, PhantomSpec, SignalRegion};
pub use split::{stratified_subject_split, Split, SplitManifest, DEFAULT_RATIOS};
pub use types::{Group, Sample3D, Series4D};
pub use vol4::{load_series, load_volume, save_series, save_volume, Vol4Header};
pub use window::sliding_window_mean;
