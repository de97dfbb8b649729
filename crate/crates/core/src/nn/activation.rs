use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    /// Row-wise over the last axis of a rank-2 tensor.
    Softmax,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = match x.shape() {
        &[_, n] => n,
        s => return Err(Error::shape(format!("softmax expects rank 2, got {s:?}"))),
    };
    let mut out = x.data().to_vec();
    for row in out.chunks_exact_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn activation_forward<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(match kind {
        Activation::Linear => x.clone(),
        Activation::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Softmax => softmax_rows(x)?,
    })
}

/// Backward pass given the cached forward input and output.
///
/// The ReLU subgradient at zero is zero.
pub fn activation_backward<T: Scalar>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() || input.shape() != output.shape() {
        return Err(Error::shape(format!(
            "activation grad {:?} vs output {:?}",
            grad_out.shape(),
            output.shape()
        )));
    }
    let shape = output.shape().to_vec();
    let data: Vec<T> = match kind {
        Activation::Linear => grad_out.data().to_vec(),
        Activation::Relu => input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect(),
        Activation::Sigmoid => output
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&y, &g)| g * y * (T::one() - y))
            .collect(),
        Activation::Softmax => {
            let n = shape[shape.len() - 1];
            let mut out = Vec::with_capacity(output.len());
            for (y, g) in output
                .data()
                .chunks_exact(n)
                .zip(grad_out.data().chunks_exact(n))
            {
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                out.extend(y.iter().zip(g).map(|(&a, &b)| a * (b - dot)));
            }
            out
        }
    };
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_sigmoid_softmax_values() {
        let x = Tensor::new([3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(
            activation_forward(Activation::Relu, &x).unwrap().data(),
            &[0.0, 0.0, 2.0]
        );
        let z = Tensor::new([1], vec![0.0f64]).unwrap();
        assert_eq!(
            activation_forward(Activation::Sigmoid, &z).unwrap().data(),
            &[0.5]
        );
        for c in [-1000.0, 0.0, 3.5, 1000.0] {
            let x = Tensor::new([1, 3], vec![c; 3]).unwrap();
            let p = softmax_rows(&x).unwrap();
            for v in p.data() {
                assert!((v - 1.0f64 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn relu_backward_zero_on_nonpositive_inputs() {
        let x = Tensor::new([4], vec![-2.0f64, -0.5, 0.0, 1.5]).unwrap();
        let y = activation_forward(Activation::Relu, &x).unwrap();
        let g = Tensor::new([4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let gx = activation_backward(Activation::Relu, &x, &y, &g).unwrap();
        assert_eq!(gx.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions(xs in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let x = Tensor::new([3, 4], xs).unwrap();
            let p = softmax_rows(&x).unwrap();
            for row in p.data().chunks(4) {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn relu_grad_vanishes_on_negative_inputs(
            xs in proptest::collection::vec(-5.0f64..5.0, 10),
            gs in proptest::collection::vec(-5.0f64..5.0, 10),
        ) {
            let x = Tensor::new([10], xs.clone()).unwrap();
            let g = Tensor::new([10], gs).unwrap();
            let y = activation_forward(Activation::Relu, &x).unwrap();
            let gx = activation_backward(Activation::Relu, &x, &y, &g).unwrap();
            for (xv, gv) in xs.iter().zip(gx.data()) {
                if *xv < 0.0 {
                    prop_assert_eq!(*gv, 0.0);
                }
            }
        }
    }
}
