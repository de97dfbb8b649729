//! Adam with bias correction and the step-decay learning-rate schedule.

use crate::error::{Error, Result};
use crate::nn::{LayerParams, ParamGrads};
use crate::tensor::{Scalar, Tensor};

/// First and second moment estimates for one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments<T = f32> {
    pub m_weights: Tensor<T>,
    pub v_weights: Tensor<T>,
    pub m_bias: Option<Tensor<T>>,
    pub v_bias: Option<Tensor<T>>,
}

impl<T: Scalar> AdamMoments<T> {
    pub fn zeros_for(weights: &Tensor<T>, bias: Option<&Tensor<T>>) -> Self {
        AdamMoments {
            m_weights: Tensor::zeros_like(weights),
            v_weights: Tensor::zeros_like(weights),
            m_bias: bias.map(Tensor::zeros_like),
            v_bias: bias.map(Tensor::zeros_like),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of steps begun so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(alpha: f64) -> Self {
        AdamState {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            t: 0,
        }
    }

    /// Advances the step counter; call once before applying a step's updates.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }
}

fn update_tensor<T: Scalar>(
    theta: &mut Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
    g: &Tensor<T>,
    state: &AdamState,
) {
    let b1 = T::from_f64(state.beta1);
    let b2 = T::from_f64(state.beta2);
    let one = T::one();
    let c1 = T::from_f64(1.0 - state.beta1.powf(state.t as f64));
    let c2 = T::from_f64(1.0 - state.beta2.powf(state.t as f64));
    let alpha = T::from_f64(state.alpha);
    let eps = T::from_f64(state.epsilon);
    for (((p, mi), vi), &gi) in theta
        .data_mut()
        .iter_mut()
        .zip(m.data_mut())
        .zip(v.data_mut())
        .zip(g.data())
    {
        *mi = b1 * *mi + (one - b1) * gi;
        *vi = b2 * *vi + (one - b2) * gi * gi;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *p -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
}

fn apply<T: Scalar>(
    weights: &mut Tensor<T>,
    bias: Option<&mut Tensor<T>>,
    moments: &mut AdamMoments<T>,
    grads: &ParamGrads<T>,
    state: &AdamState,
) -> Result<()> {
    if state.t == 0 {
        return Err(Error::invalid(
            "adam step counter must be advanced before updating",
        ));
    }
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    update_tensor(
        weights,
        &mut moments.m_weights,
        &mut moments.v_weights,
        &grads.weights,
        state,
    );
    if let (Some(b), Some(gb), Some(mb), Some(vb)) = (
        bias,
        grads.bias.as_ref(),
        moments.m_bias.as_mut(),
        moments.v_bias.as_mut(),
    ) {
        update_tensor(b, mb, vb, gb, state);
    }
    Ok(())
}

/// Applies one Adam update using an explicit moment buffer.
///
/// Fails without touching anything if the gradients are non-finite or the
/// step counter has not been advanced.
pub fn adam_update<T: Scalar>(
    params: &mut LayerParams<T>,
    moments: &mut AdamMoments<T>,
    grads: &ParamGrads<T>,
    state: &AdamState,
) -> Result<()> {
    grads.check_matches(params)?;
    if moments.m_weights.shape() != params.weights.shape() {
        return Err(Error::shape("moment buffer does not match parameters"));
    }
    apply(
        &mut params.weights,
        params.bias.as_mut(),
        moments,
        grads,
        state,
    )
}

/// Adam update using the moments stored alongside the parameters.
pub fn adam_step<T: Scalar>(
    params: &mut LayerParams<T>,
    grads: &ParamGrads<T>,
    state: &AdamState,
) -> Result<()> {
    grads.check_matches(params)?;
    apply(
        &mut params.weights,
        params.bias.as_mut(),
        &mut params.moments,
        grads,
        state,
    )
}

/// `lr(e) = base * decay_factor^floor(e / period_epochs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_factor: f64,
    pub period_epochs: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 1e-4,
            decay_factor: 1.0 / 3.0,
            period_epochs: 50,
        }
    }
}

impl LrSchedule {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.base
            * self
                .decay_factor
                .powi((epoch / self.period_epochs.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_params(v: f64) -> LayerParams<f64> {
        LayerParams::new(Tensor::new([1], vec![v]).unwrap(), None)
    }

    fn scalar_grad(g: f64) -> ParamGrads<f64> {
        ParamGrads {
            weights: Tensor::new([1], vec![g]).unwrap(),
            bias: None,
        }
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(1e-4);
        s.begin_step();
        adam_step(&mut p, &scalar_grad(2.0), &s).unwrap();
        let expected = -1e-4 * (2.0 / (2.0 + 1e-7));
        assert!((p.weights.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_on_fresh_state_keeps_params() {
        let mut p = scalar_params(0.75);
        let mut s = AdamState::new(1e-3);
        s.begin_step();
        adam_step(&mut p, &scalar_grad(0.0), &s).unwrap();
        assert_eq!(p.weights.data()[0].to_bits(), 0.75f64.to_bits());
    }

    #[test]
    fn descends_a_parabola() {
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(0.1);
        let mut prev = 1.0;
        for _ in 0..10 {
            let theta = p.weights.data()[0];
            s.begin_step();
            adam_step(&mut p, &scalar_grad(2.0 * theta), &s).unwrap();
            let f = p.weights.data()[0].powi(2);
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn rejects_non_finite_and_unstarted_steps() {
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(0.1);
        assert!(adam_step(&mut p, &scalar_grad(1.0), &s).is_err());
        s.begin_step();
        assert!(matches!(
            adam_step(&mut p, &scalar_grad(f64::NAN), &s),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(p.weights.data()[0], 1.0);
    }

    #[test]
    fn schedule_values() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at_epoch(0), 1e-4);
        assert!((s.lr_at_epoch(50) - 3.3333e-5).abs() < 1e-9);
        assert!((s.lr_at_epoch(149) - 1.1111e-5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn zero_grads_leave_params_bitwise(ws in proptest::collection::vec(-10.0f32..10.0, 1..20), lr in 1e-6f64..1.0) {
            let n = ws.len();
            let mut p = LayerParams::new(Tensor::new([n], ws.clone()).unwrap(), Some(Tensor::new([1], vec![0.5f32]).unwrap()));
            let g = ParamGrads { weights: Tensor::zeros([n]).unwrap(), bias: Some(Tensor::zeros([1]).unwrap()) };
            let mut s = AdamState::new(lr);
            s.begin_step();
            adam_step(&mut p, &g, &s).unwrap();
            let same = p.weights.data().iter().zip(&ws).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }

        #[test]
        fn schedule_non_increasing_and_positive(e in 0usize..1000) {
            let s = LrSchedule::default();
            prop_assert!(s.lr_at_epoch(e) > 0.0);
            prop_assert!(s.lr_at_epoch(e + 1) <= s.lr_at_epoch(e));
        }
    }
}
