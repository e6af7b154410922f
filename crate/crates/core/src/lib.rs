//! Group robustness against spurious correlations without group labels.
//!
//! The pipeline trains a small classifier on images with planted shortcuts,
//! explains its decisions with layer-wise relevance propagation, clusters the
//! relevance heatmaps to infer pseudo-group labels, retrains on those groups
//! (last-layer refit or error-set upweighting), and reports worst-group
//! accuracy and shortcut-gap metrics.
//!
//! The numeric kernels are generic over [`scalar::Scalar`]; the `*64` aliases
//! fix the element type used by the pipeline.

pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod lrp;
pub mod nn;
pub mod pseudo;
pub mod retrain;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Layer64 = nn::Layer<f64>;
pub type Network64 = nn::Network<f64>;
