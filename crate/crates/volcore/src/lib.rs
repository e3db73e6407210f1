//! Dense `f64` volumes and a small reverse-mode differentiation tape.
//!
//! The op set is exactly what a two-layer volumetric CNN classifier needs:
//! valid 3D convolution, non-overlapping 3D max pooling, a dense layer,
//! ReLU, sigmoid and a clamped binary cross-entropy. Gradients with respect
//! to the network input are available through the same tape, which is what
//! saliency-style sensitivity analysis consumes.
//!
//! ```
//! use volcore::{LayerId, LayerParams, Tape, Volume};
//!
//! let mut layers = vec![LayerParams::dense(1, 3)];
//! layers[0].weights.data_mut().copy_from_slice(&[1.0, 1.0, 1.0]);
//! layers[0].bias.data_mut()[0] = 0.5;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Volume::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(), true);
//! let y = tape.dense(x, &layers, LayerId(0)).unwrap();
//! assert_eq!(tape.value(y).unwrap().data(), &[6.5]);
//!
//! tape.backward(y, &mut layers).unwrap();
//! assert_eq!(layers[0].grad_weights.data(), &[1.0, 2.0, 3.0]);
//! assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
//! ```

mod error;
pub mod ops;
mod params;
pub mod reference;
mod tape;
mod volume;

pub use error::VolError;
pub use ops::activation::{relu, sigmoid};
pub use ops::conv::{conv3d_backward, conv3d_forward, conv_output_dim};
pub use ops::dense::{dense_backward, dense_forward};
pub use ops::loss::{bce_l2_loss, bce_term, clamp_prob, l2_penalty, add_l2_grad, PROB_EPS};
pub use ops::pool::{maxpool3d_backward, maxpool3d_forward, pool_output_dim};
pub use params::{LayerId, LayerParams};
pub use tape::{Tape, Var};
pub use volume::Volume;

pub type Result<T, E = VolError> = std::result::Result<T, E>;
