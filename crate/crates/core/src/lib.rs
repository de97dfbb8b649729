//! Convolutional supervised autoencoder (CSAE).
//!
//! An encoder/decoder pair and a classifier head that reads the latent code
//! are trained by alternating, per batch, a reconstruction step and a
//! classification step. The trained encoder then provides low-dimensional
//! features for classical classifiers (k-NN, Gaussian naive Bayes, RBF SVM),
//! and two-dimensional latent spaces can be rendered as decision-boundary and
//! decoder-grid images.
//!
//! Everything is implemented from scratch on top of a small dense
//! [`Tensor`] type; the only numeric dependency is a gemm kernel.

pub mod checkpoint;
pub mod classic;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use model::{ArchPreset, CsaeModel, PresetName};
pub use tensor::{Scalar, Tensor};
pub use train::{train, TrainConfig, TrainReport, UpdateMode};
