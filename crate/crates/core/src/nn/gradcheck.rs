//! Central finite-difference checks of every backward pass, run at `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{softmax_rows, Activation};
use super::network::{Init, Layer, LayerSpec};
use crate::error::{Error, Result};
use crate::loss::{categorical_crossentropy, mse_loss};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(1, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .expect("non-empty shape")
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("gradient check: {what}")))
    }
}

/// Central difference of `f` with respect to each entry of `x`, compared with
/// `analytic`; returns the worst relative error.
fn compare(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut f: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<f64> {
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - FD_STEP;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = finite((plus - minus) / (2.0 * FD_STEP), "numeric")?;
        let a = finite(analytic.data()[i], "analytic")?;
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// Checks one layer's backward pass on a random instance.
///
/// `input_shape` includes the batch axis. The scalar objective is
/// `sum(r * layer(x))` for a fixed random `r`. Returns the maximum relative
/// error over all inputs and parameters.
pub fn gradient_check(spec: &LayerSpec, input_shape: &[usize], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer: Layer<f64> = spec.build("probe", &input_shape[1..], Init::Uniform(1.0), &mut rng)?;
    let x = random_tensor(input_shape, &mut rng);
    let y = layer.forward(&x)?;
    let r = random_tensor(y.shape(), &mut rng);
    let (gx, pg) = layer.backward(&x, &y, &r, true)?;
    let gx = gx.ok_or_else(|| Error::invalid("layer produced no input gradient"))?;

    let mut worst = compare(&x, &gx, |xp| layer.forward(xp)?.dot(&r))?;

    if let (Some(pg), Some(params)) = (pg, layer.params()) {
        worst = worst.max(compare(&params.weights, &pg.weights, |wp| {
            let mut probe = layer.clone();
            probe.params_mut().expect("trainable").weights = wp.clone();
            probe.forward(&x)?.dot(&r)
        })?);
        if let (Some(gb), Some(b)) = (&pg.bias, &params.bias) {
            worst = worst.max(compare(b, gb, |bp| {
                let mut probe = layer.clone();
                probe.params_mut().expect("trainable").bias = Some(bp.clone());
                probe.forward(&x)?.dot(&r)
            })?);
        }
    }
    Ok(worst)
}

/// Softmax followed by cross-entropy, differentiated with respect to logits.
pub fn check_softmax_cross_entropy(batch: usize, classes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_tensor(&[batch, classes], &mut rng).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, g) = categorical_crossentropy(&softmax_rows(&z)?, &labels)?;
    compare(&z, &g, |zp| {
        Ok(categorical_crossentropy(&softmax_rows(zp)?, &labels)?.0)
    })
}

pub fn check_mse(shape: &[usize], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_hat = random_tensor(shape, &mut rng);
    let x = random_tensor(shape, &mut rng);
    let (_, g) = mse_loss(&x_hat, &x)?;
    compare(&x_hat, &g, |xp| Ok(mse_loss(xp, &x)?.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub seeds: u64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Runs every layer and loss check over `seeds` random instances each.
pub fn gradcheck_suite(seeds: u64) -> Result<Vec<GradCheckReport>> {
    let conv = LayerSpec::Conv2d {
        kernel: [3, 3],
        filters: 3,
        stride: 2,
        bias: true,
    };
    let tconv = LayerSpec::Conv2dTranspose {
        kernel: [3, 3],
        filters: 2,
        stride: 2,
        bias: true,
    };
    let layer_cases: [(&'static str, LayerSpec, Vec<usize>, f64); 6] = [
        ("dense", LayerSpec::Dense { units: 5 }, vec![4, 3], 1e-6),
        ("conv2d_stride2", conv, vec![2, 6, 6, 2], 1e-5),
        ("conv2d_transpose_stride2", tconv, vec![2, 3, 3, 3], 1e-5),
        (
            "relu",
            LayerSpec::Activation(Activation::Relu),
            vec![3, 7],
            1e-5,
        ),
        (
            "sigmoid",
            LayerSpec::Activation(Activation::Sigmoid),
            vec![3, 7],
            1e-5,
        ),
        (
            "softmax",
            LayerSpec::Activation(Activation::Softmax),
            vec![3, 5],
            1e-5,
        ),
    ];
    let mut reports = Vec::new();
    for (name, spec, shape, tolerance) in layer_cases {
        let mut worst = 0.0f64;
        for seed in 0..seeds {
            worst = worst.max(gradient_check(&spec, &shape, seed)?);
        }
        reports.push(GradCheckReport {
            name,
            max_rel_error: worst,
            tolerance,
            seeds,
        });
    }
    let mut ce = 0.0f64;
    let mut mse = 0.0f64;
    for seed in 0..seeds {
        ce = ce.max(check_softmax_cross_entropy(4, 5, seed)?);
        mse = mse.max(check_mse(&[3, 4, 2], seed)?);
    }
    reports.push(GradCheckReport {
        name: "softmax_cross_entropy",
        max_rel_error: ce,
        tolerance: 1e-6,
        seeds,
    });
    reports.push(GradCheckReport {
        name: "mse",
        max_rel_error: mse,
        tolerance: 1e-6,
        seeds,
    });
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
        assert!((relative_error(10.0, 11.0) - 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn dense_check_passes() {
        let e = gradient_check(&LayerSpec::Dense { units: 5 }, &[4, 3], 0).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // A deliberately broken analytic gradient must be flagged.
        let x = Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap();
        let wrong = Tensor::new([3], vec![2.0, 4.0, 7.0]).unwrap();
        let e = compare(&x, &wrong, |v| Ok(v.data().iter().map(|a| a * a).sum())).unwrap();
        assert!(e > 0.05);
    }
}
