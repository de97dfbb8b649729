use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probability clip used by the cross-entropy.
pub const PROB_CLIP: f64 = 1e-7;

/// Mean squared error over all elements and its gradient `2 (x_hat - x) / N`.
pub fn mse_loss<T: Scalar>(x_hat: &Tensor<T>, x: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if x_hat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "mse between {:?} and {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    let n = x.len() as f64;
    let scale = T::from_f64(2.0 / n);
    let mut sum = 0.0f64;
    let grad: Vec<T> = x_hat
        .data()
        .iter()
        .zip(x.data())
        .map(|(&a, &b)| {
            let d = a - b;
            sum += (d * d).as_f64();
            scale * d
        })
        .collect();
    Ok((T::from_f64(sum / n), Tensor::new(x.shape().to_vec(), grad)?))
}

/// Categorical cross-entropy of softmax outputs `p` against integer labels.
///
/// The returned gradient is taken with respect to the pre-softmax logits,
/// `(p - onehot(y)) / batch`.
pub fn categorical_crossentropy<T: Scalar>(
    p: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (b, k) = match p.shape() {
        &[b, k] => (b, k),
        s => {
            return Err(Error::shape(format!(
                "cross-entropy expects [b, k], got {s:?}"
            )))
        }
    };
    if labels.len() != b {
        return Err(Error::shape(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }
    let inv_b = T::from_f64(1.0 / b as f64);
    let mut grad = p.data().to_vec();
    let mut loss = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let pi = p.data()[i * k + y]
            .as_f64()
            .clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        loss -= pi.ln();
        grad[i * k + y] -= T::one();
    }
    for g in &mut grad {
        *g *= inv_b;
    }
    Ok((T::from_f64(loss / b as f64), Tensor::new([b, k], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_rows;
    use proptest::prelude::*;

    #[test]
    fn mse_cases() {
        let x = Tensor::new([2], vec![0.0f64, 0.0]).unwrap();
        let (l, g) = mse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.data(), &[0.0, 0.0]);
        let xh = Tensor::new([2], vec![1.0, 0.0]).unwrap();
        let (l, g) = mse_loss(&xh, &x).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g.data(), &[1.0, 0.0]);
        assert!(mse_loss(&xh, &Tensor::zeros([3]).unwrap()).is_err());
    }

    #[test]
    fn mse_gradient_matches_central_differences() {
        let xh: Tensor<f64> = Tensor::new([2, 3], vec![0.3, -1.2, 0.8, 2.0, 0.1, -0.4]).unwrap();
        let x = Tensor::new([2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let (_, g) = mse_loss(&xh, &x).unwrap();
        let h = 1e-5f64;
        for i in 0..xh.len() {
            let mut p = xh.clone();
            p.data_mut()[i] += h;
            let mut m = xh.clone();
            m.data_mut()[i] -= h;
            let num = (mse_loss(&p, &x).unwrap().0 - mse_loss(&m, &x).unwrap().0) / (2.0 * h);
            assert!((num - g.data()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let p = Tensor::new([1, 2], vec![1.0f64, 0.0]).unwrap();
        let (l, _) = categorical_crossentropy(&p, &[0]).unwrap();
        assert!((l - (-(1.0f64 - 1e-7).ln())).abs() < 1e-15);
        let p = Tensor::new([1, 2], vec![0.5f64, 0.5]).unwrap();
        let (l, g) = categorical_crossentropy(&p, &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(g.data(), &[-0.5, 0.5]);
        assert!(matches!(
            categorical_crossentropy(&p, &[5]),
            Err(Error::LabelOutOfRange {
                label: 5,
                num_classes: 2
            })
        ));
    }

    proptest! {
        #[test]
        fn mse_nonnegative_and_zero_iff_equal(
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let ta = Tensor::new([6], a.clone()).unwrap();
            let tb = Tensor::new([6], b.clone()).unwrap();
            let (l, _) = mse_loss(&ta, &tb).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, a == b);
        }

        #[test]
        fn softmax_ce_gradient_matches_differences(
            logits in proptest::collection::vec(-4.0f64..4.0, 8),
            y0 in 0usize..4, y1 in 0usize..4,
        ) {
            let z = Tensor::new([2, 4], logits).unwrap();
            let labels = [y0, y1];
            let f = |z: &Tensor<f64>| categorical_crossentropy(&softmax_rows(z).unwrap(), &labels).unwrap().0;
            let (_, g) = categorical_crossentropy(&softmax_rows(&z).unwrap(), &labels).unwrap();
            let h = 1e-5;
            for i in 0..z.len() {
                let mut p = z.clone();
                p.data_mut()[i] += h;
                let mut m = z.clone();
                m.data_mut()[i] -= h;
                let num = (f(&p) - f(&m)) / (2.0 * h);
                prop_assert!((num - g.data()[i]).abs() < 1e-6);
            }
        }
    }
}
