//! The two-convolution classifier: configuration, initialization, SGD training
//! with early stopping, and checkpoints.

mod checkpoint;
mod config;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainProgress};
pub use config::{lr_at_epoch, CnnConfig, ConvSpec, LayerShapes};
#[allow(unused_imports)]
pub(crate) use config::{kv_lines, parse};
pub use network::{forward, init_params, predict, CnnParams, ProbabilityModel, CONV1, CONV2, FC};
pub use train::{
    check_disjoint, compute_gradients, momentum_update, train, train_step, BatchStats,
    EpochRecord, StopReason, TrainHistory, Trainer,
};
