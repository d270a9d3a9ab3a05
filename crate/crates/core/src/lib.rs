pub mod autodiff;
pub mod batch;
pub mod csp;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Single-precision types used for training and inference.
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Network32 = model::Network<f32>;

/// Double-precision types used for gradient verification.
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Network64 = model::Network<f64>;
