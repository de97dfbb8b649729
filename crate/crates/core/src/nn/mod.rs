//! Layers with explicit forward and backward passes.

mod activation;
mod conv;
mod dense;
pub mod gradcheck;
mod network;
mod params;

pub use activation::{activation_backward, activation_forward, softmax_rows, Activation};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_transpose_backward, conv2d_transpose_forward,
    same_padding,
};
pub use dense::{dense_backward, dense_forward};
pub use gradcheck::{gradcheck_suite, gradient_check, GradCheckReport};
pub use network::{Init, Layer, LayerSpec, Network, Trace};
pub use params::{LayerParams, ParamGrads};
