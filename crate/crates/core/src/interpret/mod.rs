//! Squared input-gradient sensitivity maps, group aggregation, percentile
//! regions, and slice images for inspection.

mod aggregate;
mod export;
mod sensitivity;

pub use aggregate::{
    aggregate_group, dice, percentile, threshold_regions, Aggregation, GroupSensitivity,
    DEFAULT_PERCENTILE,
};
pub use export::{export_slices, read_pnm, scale_to_u8, slice_count};
pub use sensitivity::{sensitivity_map, sensitivity_maps, DenseSigmoidModel, SensitivityMap};
