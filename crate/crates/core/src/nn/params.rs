use crate::error::{Error, Result};
use crate::optim::AdamMoments;
use crate::tensor::{Scalar, Tensor};

/// Trainable weights of one layer plus the optimizer moments that track them.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub moments: AdamMoments<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weights: Tensor<T>, bias: Option<Tensor<T>>) -> Self {
        let moments = AdamMoments::zeros_for(&weights, bias.as_ref());
        LayerParams {
            weights,
            bias,
            moments,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Tensor::len)
    }

    pub(crate) fn add_bias_rows(&self, out: &mut [T], width: usize) {
        if let Some(b) = &self.bias {
            for row in out.chunks_exact_mut(width) {
                for (o, &bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
        }
    }
}

/// Gradients with respect to a layer's [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn all_finite(&self) -> bool {
        self.weights.all_finite() && self.bias.as_ref().is_none_or(Tensor::all_finite)
    }

    pub(crate) fn check_matches(&self, params: &LayerParams<T>) -> Result<()> {
        let bias_ok = match (&self.bias, &params.bias) {
            (Some(g), Some(p)) => g.shape() == p.shape(),
            (None, None) => true,
            _ => false,
        };
        if self.weights.shape() != params.weights.shape() || !bias_ok {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                self.weights.shape(),
                params.weights.shape()
            )));
        }
        Ok(())
    }
}

/// Sum of rows of a `[rows, width]` buffer, i.e. the bias gradient.
pub(crate) fn column_sums<T: Scalar>(g: &[T], width: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); width];
    for row in g.chunks_exact(width) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc
}
