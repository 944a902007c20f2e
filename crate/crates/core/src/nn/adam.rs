//! Bias-corrected Adam with embedded L2 weight decay.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First/second moment buffers plus the step counter, shaped like the
/// parameter set they optimize.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Moment buffers sized from the parameter tensors.
    pub fn for_params(params: &[&Tensor]) -> Self {
        Self {
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a parameter set whose gradients live in each
/// tensor's grad buffer.
///
/// `weight_decay` is the L2 coefficient lambda_reg: 2*lambda*w is added to
/// each gradient before the moment update (decay embedded in the gradient,
/// not decoupled).
pub fn adam_step(
    params: &mut [&mut Tensor],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if weight_decay < 0.0 {
        return Err(Error::Config(format!("weight decay must be nonnegative, got {weight_decay}")));
    }
    if params.len() != state.first.len() {
        return Err(Error::shape(
            format!("{} moment buffers", state.first.len()),
            format!("{} parameter tensors", params.len()),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let (data, grad) = p.data_and_grad_mut();
        let grad = grad.ok_or_else(|| Error::State("parameter tensor has no gradient buffer".into()))?;
        if grad.len() != data.len() || state.first[i].len() != data.len() {
            return Err(Error::shape(format!("{} values", data.len()), format!("{} grads", grad.len())));
        }
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for j in 0..data.len() {
            let g = grad[j] + 2.0 * weight_decay * data[j];
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64, g: f64) -> Tensor {
        let mut t = Tensor::new(vec![1], vec![w]).unwrap();
        t.ensure_grad();
        t.grad_mut().unwrap()[0] = g;
        t
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = scalar_param(0.42, 0.0);
        let mut state = AdamState::for_params(&[&p]);
        adam_step(&mut [&mut p], &mut state, 0.1, 0.0).unwrap();
        assert_eq!(p.data()[0], 0.42);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // At t=1 the bias-corrected ratio is g/|g| up to epsilon.
        let mut p = scalar_param(0.0, 1.0);
        let mut state = AdamState::for_params(&[&p]);
        adam_step(&mut [&mut p], &mut state, 0.1, 0.0).unwrap();
        assert!((p.data()[0] + 0.1).abs() < 1e-6, "got {}", p.data()[0]);
    }

    #[test]
    fn pure_decay_shrinks_weight() {
        let mut p = scalar_param(1.0, 0.0);
        let mut state = AdamState::for_params(&[&p]);
        let mut last = 1.0f64;
        for _ in 0..20 {
            {
                let (data, grad) = p.data_and_grad_mut();
                let _ = data;
                grad.unwrap()[0] = 0.0;
            }
            adam_step(&mut [&mut p], &mut state, 0.01, 1e-3).unwrap();
            let w = p.data()[0];
            assert!(w.abs() < last.abs(), "no shrink: {w} vs {last}");
            assert!(w > 0.0, "decay overshot through zero too fast: {w}");
            last = w;
        }
    }

    #[test]
    fn missing_grad_is_a_state_error() {
        let mut p = Tensor::new(vec![1], vec![0.5]).unwrap();
        let mut state = AdamState::for_params(&[&p]);
        assert!(adam_step(&mut [&mut p], &mut state, 0.1, 0.0).is_err());
    }
}
