//! Fully connected layer: `y = x W + b` with `W` stored as `[in, out]`.

use super::params::{column_sums, LayerParams, ParamGrads};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Tensor, Trans};

fn dims<T: Scalar>(params: &LayerParams<T>, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (fan_in, fan_out) = match params.weights.shape() {
        &[i, o] => (i, o),
        s => {
            return Err(Error::shape(format!(
                "dense weights must be rank 2, got {s:?}"
            )))
        }
    };
    match x.shape() {
        &[b, i] if i == fan_in => Ok((b, fan_in, fan_out)),
        s => Err(Error::shape(format!(
            "dense layer expects [batch, {fan_in}], got {s:?}"
        ))),
    }
}

pub fn dense_forward<T: Scalar>(params: &LayerParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, fan_in, fan_out) = dims(params, x)?;
    let mut out = vec![T::zero(); b * fan_out];
    gemm(
        Trans::No,
        Trans::No,
        b,
        fan_in,
        fan_out,
        x.data(),
        params.weights.data(),
        &mut out,
        false,
    );
    params.add_bias_rows(&mut out, fan_out);
    Tensor::new([b, fan_out], out)
}

/// Returns `(grad_x, grads)`; `grad_x` is skipped when not requested.
pub fn dense_backward<T: Scalar>(
    params: &LayerParams<T>,
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, ParamGrads<T>)> {
    let (b, fan_in, fan_out) = dims(params, x)?;
    if grad_out.shape() != [b, fan_out] {
        return Err(Error::shape(format!(
            "dense grad_out {:?}, expected [{b}, {fan_out}]",
            grad_out.shape()
        )));
    }
    let mut gw = vec![T::zero(); fan_in * fan_out];
    gemm(
        Trans::Yes,
        Trans::No,
        fan_in,
        b,
        fan_out,
        x.data(),
        grad_out.data(),
        &mut gw,
        false,
    );
    let gb = params
        .bias
        .as_ref()
        .map(|_| Tensor::new([fan_out], column_sums(grad_out.data(), fan_out)))
        .transpose()?;
    let gx = if need_input_grad {
        let mut gx = vec![T::zero(); b * fan_in];
        gemm(
            Trans::No,
            Trans::Yes,
            b,
            fan_out,
            fan_in,
            grad_out.data(),
            params.weights.data(),
            &mut gx,
            false,
        );
        Some(Tensor::new([b, fan_in], gx)?)
    } else {
        None
    };
    Ok((
        gx,
        ParamGrads {
            weights: Tensor::new([fan_in, fan_out], gw)?,
            bias: gb,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w: &[f64], shape: [usize; 2], b: &[f64]) -> LayerParams<f64> {
        LayerParams::new(
            Tensor::new(shape, w.to_vec()).unwrap(),
            Some(Tensor::new([b.len()], b.to_vec()).unwrap()),
        )
    }

    #[test]
    fn identity_layer() {
        let p = params(&[1.0, 0.0, 0.0, 1.0], [2, 2], &[0.0, 0.0]);
        let x = Tensor::new([1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(dense_forward(&p, &x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn hand_evaluated_forward() {
        let p = params(&[2.0, 0.0, 0.0, 3.0], [2, 2], &[1.0, 1.0]);
        let x = Tensor::new([1, 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(dense_forward(&p, &x).unwrap().data(), &[3.0, 1.0]);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let p = params(&[0.0; 6], [2, 3], &[0.0; 3]);
        let x = Tensor::new([1, 3], vec![0.0; 3]).unwrap();
        assert!(dense_forward(&p, &x).is_err());
    }

    #[test]
    fn bias_grad_sums_over_batch() {
        let p = params(&[0.5; 6], [3, 2], &[0.0; 2]);
        let x = Tensor::new([2, 3], vec![1.0; 6]).unwrap();
        let g = Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, grads) = dense_backward(&p, &x, &g, false).unwrap();
        assert_eq!(grads.bias.unwrap().data(), &[4.0, 6.0]);
    }
}
