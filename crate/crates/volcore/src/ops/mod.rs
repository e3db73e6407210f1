//! Kernels behind the tape ops. Each forward has a matching backward that
//! accumulates into caller-provided gradient buffers.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod pool;
